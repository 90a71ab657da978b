//! Leapfrog integration and the staged proposal maps.
//!
//! A proposal map for stage `k` runs `n_k` leapfrog steps of size
//! `eps_k = eps / r^(k-1)` and then negates the momentum. The composition is a
//! volume-preserving involution, which is what the delayed-rejection
//! acceptance probability relies on.

use crate::model::LogDensity;
use crate::{Error, Result};

/// Position and momentum in `R^D x R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl PhasePoint {
    pub fn new(position: Vec<f64>, momentum: Vec<f64>) -> Self {
        debug_assert_eq!(position.len(), momentum.len());
        Self { position, momentum }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.momentum).all(|v| v.is_finite())
    }

    /// `(theta, rho) -> (theta, -rho)`.
    pub fn flip(&self) -> Self {
        let mut out = self.clone();
        out.flip_in_place();
        out
    }

    pub fn flip_in_place(&mut self) {
        for p in &mut self.momentum {
            *p = -*p;
        }
    }

    /// Largest absolute coordinate difference over position and momentum.
    pub fn max_abs_diff(&self, other: &PhasePoint) -> f64 {
        self.position
            .iter()
            .zip(&other.position)
            .chain(self.momentum.iter().zip(&other.momentum))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn flip(z: &PhasePoint) -> PhasePoint {
    z.flip()
}

/// Diagonal mass matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    diag: Vec<f64>,
    inv: Vec<f64>,
    sqrt: Vec<f64>,
}

impl MassMatrix {
    pub fn identity(dim: usize) -> Self {
        Self { diag: vec![1.0; dim], inv: vec![1.0; dim], sqrt: vec![1.0; dim] }
    }

    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || diag.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidConfig("mass matrix entries must be positive".into()));
        }
        let inv = diag.iter().map(|m| 1.0 / m).collect();
        let sqrt = diag.iter().map(|m| m.sqrt()).collect();
        Ok(Self { diag, inv, sqrt })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn inverse(&self) -> &[f64] {
        &self.inv
    }

    /// `M^{1/2}`, used to draw momenta from `N(0, M)`.
    pub fn sqrt(&self) -> &[f64] {
        &self.sqrt
    }

    /// `rho^T M^{-1} rho / 2`.
    pub fn kinetic_energy(&self, momentum: &[f64]) -> f64 {
        0.5 * momentum.iter().zip(&self.inv).map(|(p, mi)| p * p * mi).sum::<f64>()
    }
}

/// `H(theta, rho) = rho^T M^{-1} rho / 2 - log pi(theta)`.
pub fn hamiltonian<M: LogDensity + ?Sized>(model: &M, z: &PhasePoint, mass: &MassMatrix) -> f64 {
    mass.kinetic_energy(&z.momentum) - model.log_density(&z.position)
}

/// Result of integrating Hamiltonian dynamics from a phase point.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    /// End point, or the offending point when `divergent`.
    pub point: PhasePoint,
    /// `log pi` at the starting position.
    pub start_log_density: f64,
    /// `log pi` at `point.position`; meaningless when `divergent`.
    pub end_log_density: f64,
    pub divergent: bool,
    pub grad_evals: u64,
}

/// `n` leapfrog steps of size `eps`.
///
/// Each step evaluates the gradient at both of its endpoints, so a step
/// always costs two gradient evaluations. Integration stops at the first
/// non-finite log density, gradient, position or momentum.
pub fn leapfrog_steps<M: LogDensity + ?Sized>(
    model: &M,
    z: &PhasePoint,
    eps: f64,
    steps: usize,
    mass: &MassMatrix,
) -> Flow {
    let dim = z.dim();
    let mut point = z.clone();
    let mut grad = vec![0.0; dim];
    let mut grad_evals = 0;
    let mut start_log_density = f64::NAN;
    let mut end_log_density = f64::NAN;
    let half = 0.5 * eps;
    let inv = mass.inverse();

    for step in 0..steps {
        let lp = model.log_density_grad(&point.position, &mut grad);
        grad_evals += 1;
        if step == 0 {
            start_log_density = lp;
        }
        if !lp.is_finite() || !all_finite(&grad) {
            return Flow { point, start_log_density, end_log_density: lp, divergent: true, grad_evals };
        }
        for ((p, g), (q, mi)) in
            point.momentum.iter_mut().zip(&grad).zip(point.position.iter_mut().zip(inv))
        {
            *p += half * g;
            *q += eps * mi * *p;
        }
        let lp = model.log_density_grad(&point.position, &mut grad);
        grad_evals += 1;
        for (p, g) in point.momentum.iter_mut().zip(&grad) {
            *p += half * g;
        }
        end_log_density = lp;
        if !lp.is_finite() || !point.is_finite() {
            return Flow { point, start_log_density, end_log_density, divergent: true, grad_evals };
        }
    }
    if steps == 0 {
        start_log_density = model.log_density(&z.position);
        end_log_density = start_log_density;
    }
    Flow { point, start_log_density, end_log_density, divergent: false, grad_evals }
}

/// One leapfrog step: half kick, drift, half kick.
pub fn leapfrog<M: LogDensity + ?Sized>(
    model: &M,
    z: &PhasePoint,
    eps: f64,
    mass: &MassMatrix,
) -> Flow {
    leapfrog_steps(model, z, eps, 1, mass)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// How many leapfrog steps each stage takes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepCount {
    /// The same number of steps at every stage.
    Fixed(usize),
    /// Keep `eps_k * n_k` close to this trajectory length: `n_k = round(tau / eps_k)`.
    TrajectoryLength(f64),
}

/// Geometric step-size schedule `eps_k = eps / r^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSchedule {
    pub step_size: f64,
    pub reduction: f64,
    pub steps: StepCount,
}

impl StageSchedule {
    pub fn new(step_size: f64, reduction: f64, steps: StepCount) -> Result<Self> {
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::InvalidConfig(format!("step size must be > 0, got {step_size}")));
        }
        if !(reduction.is_finite() && reduction >= 1.0) {
            return Err(Error::InvalidConfig(format!("reduction factor must be >= 1, got {reduction}")));
        }
        match steps {
            StepCount::Fixed(0) => {
                return Err(Error::InvalidConfig("leapfrog steps must be >= 1".into()))
            }
            StepCount::TrajectoryLength(t) if !(t.is_finite() && t > 0.0) => {
                return Err(Error::InvalidConfig(format!("trajectory length must be > 0, got {t}")))
            }
            _ => {}
        }
        Ok(Self { step_size, reduction, steps })
    }

    /// Step size at 1-based stage `k`.
    pub fn step_size(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        self.step_size / self.reduction.powi(k as i32 - 1)
    }

    /// Leapfrog steps at 1-based stage `k`; always at least one.
    pub fn steps(&self, k: usize) -> usize {
        match self.steps {
            StepCount::Fixed(n) => n,
            StepCount::TrajectoryLength(tau) => ((tau / self.step_size(k)).round() as usize).max(1),
        }
    }
}

/// The stage-`k` proposal map: leapfrog, then flip.
pub fn proposal_map<M: LogDensity + ?Sized>(
    model: &M,
    z: &PhasePoint,
    k: usize,
    schedule: &StageSchedule,
    mass: &MassMatrix,
) -> Flow {
    let mut flow = leapfrog_steps(model, z, schedule.step_size(k), schedule.steps(k), mass);
    flow.point.flip_in_place();
    flow
}
