//! Pilot runs that pick a reference step size and a diagonal mass matrix.

use super::chain::{chain_rng, run_chain};
use super::config::{DrGhmcConfig, SamplerConfig};
use super::delayed::drghmc_step;
use super::hmc::sample_momentum;
use crate::integrator::{MassMatrix, PhasePoint};
use crate::model::LogDensity;
use crate::{Error, Result};

/// Stream index reserved for pilot runs so they never share draws with chains.
const PILOT_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeTuning {
    pub step_size: f64,
    /// Mean first-stage acceptance probability at `step_size`.
    pub mean_accept: f64,
    /// Gradient evaluations spent by the search.
    pub grad_evals: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    pub target_accept: f64,
    pub damping: f64,
    pub pilot_iterations: usize,
    pub bisection_steps: usize,
    pub min_step: f64,
    pub max_step: f64,
    pub seed: u64,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            target_accept: 0.8,
            damping: 0.08,
            pilot_iterations: 200,
            bisection_steps: 20,
            min_step: 1e-4,
            max_step: 1e2,
            seed: 0,
        }
    }
}

/// Mean first-stage acceptance of a one-step G-HMC pilot at `step_size`.
fn pilot_accept<M: LogDensity + ?Sized>(
    model: &M,
    init: &[f64],
    step_size: f64,
    mass: &MassMatrix,
    opts: &TuningOptions,
) -> (f64, u64) {
    let cfg = DrGhmcConfig {
        max_proposals: 1,
        damping: opts.damping,
        step_size,
        reduction: 2.0,
        steps: 1,
        mass: mass.clone(),
        seed: opts.seed,
    };
    // common random numbers across candidates keep the search monotone-ish
    let mut rng = chain_rng(opts.seed, PILOT_STREAM);
    let mut z = PhasePoint::new(init.to_vec(), sample_momentum(mass, &mut rng));
    let mut total = 0.0;
    let mut grads = 0;
    for _ in 0..opts.pilot_iterations {
        let out = drghmc_step(model, &z, &cfg, &mut rng);
        total += out.records[0].accept_prob;
        grads += out.grad_evals;
        z = out.next;
    }
    (total / opts.pilot_iterations as f64, grads)
}

/// Bisection on `log eps` for the step size whose one-step G-HMC pilot
/// accepts with mean probability `target_accept`.
pub fn tune_step_size<M: LogDensity + ?Sized>(
    model: &M,
    init: &[f64],
    mass: &MassMatrix,
    opts: &TuningOptions,
) -> Result<StepSizeTuning> {
    if init.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), actual: init.len() });
    }
    if opts.pilot_iterations == 0 || !(opts.min_step > 0.0 && opts.max_step > opts.min_step) {
        return Err(Error::InvalidConfig("invalid step-size search options".into()));
    }
    let mut grad_evals = 0;
    let (acc_hi, g) = pilot_accept(model, init, opts.max_step, mass, opts);
    grad_evals += g;
    if acc_hi >= opts.target_accept {
        return Ok(StepSizeTuning { step_size: opts.max_step, mean_accept: acc_hi, grad_evals });
    }
    let (mut lo, mut hi) = (opts.min_step.ln(), opts.max_step.ln());
    let mut best = (opts.min_step, f64::NAN);
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let (acc, g) = pilot_accept(model, init, mid.exp(), mass, opts);
        grad_evals += g;
        if acc >= opts.target_accept {
            lo = mid;
            best = (mid.exp(), acc);
        } else {
            hi = mid;
        }
    }
    if best.1.is_nan() {
        let (acc, g) = pilot_accept(model, init, opts.min_step, mass, opts);
        grad_evals += g;
        best.1 = acc;
    }
    Ok(StepSizeTuning { step_size: best.0, mean_accept: best.1, grad_evals })
}

/// Diagonal mass matrix `M_d = 1 / Var(theta_d)` from the second half of a
/// DR-G-HMC pilot chain with identity mass.
pub fn diagonal_mass_from_pilot<M: LogDensity + ?Sized>(
    model: &M,
    init: &[f64],
    step_size: f64,
    budget: u64,
    seed: u64,
) -> Result<(MassMatrix, u64)> {
    let mut cfg = DrGhmcConfig::new(model.dim(), step_size);
    cfg.seed = seed;
    let out = run_chain(model, &SamplerConfig::DrGhmc(cfg), init, budget, PILOT_STREAM)?;
    let half = out.len() / 2;
    if out.len() - half < 2 {
        return Err(Error::InvalidConfig("pilot budget too small for mass estimation".into()));
    }
    let diag = (0..model.dim())
        .map(|d| {
            let col: Vec<f64> = out.draws().skip(half).map(|r| r[d]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.0 / var.clamp(1e-8, 1e8)
        })
        .collect();
    Ok((MassMatrix::diagonal(diag)?, out.stats.grad_evals))
}
