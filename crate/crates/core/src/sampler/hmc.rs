use rand::Rng;
use rand_distr::StandardNormal;

use super::config::HmcConfig;
use super::delayed::{IterationOutcome, ProposalRecord};
use crate::integrator::{leapfrog_steps, MassMatrix, PhasePoint};
use crate::model::LogDensity;

/// `rho' = sqrt(1 - gamma) rho + sqrt(gamma) M^{1/2} xi`, `xi ~ N(0, I)`.
///
/// Leaves `N(0, M)` invariant; `gamma = 1` is a full refresh.
pub fn partial_momentum_refresh<R: Rng + ?Sized>(
    momentum: &[f64],
    damping: f64,
    mass: &MassMatrix,
    rng: &mut R,
) -> Vec<f64> {
    let keep = (1.0 - damping).sqrt();
    let scale = damping.sqrt();
    momentum
        .iter()
        .zip(mass.sqrt())
        .map(|(p, s)| {
            let xi: f64 = rng.sample(StandardNormal);
            keep * p + scale * s * xi
        })
        .collect()
}

/// Draws `rho ~ N(0, M)`.
pub fn sample_momentum<R: Rng + ?Sized>(mass: &MassMatrix, rng: &mut R) -> Vec<f64> {
    mass.sqrt()
        .iter()
        .map(|s| {
            let xi: f64 = rng.sample(StandardNormal);
            s * xi
        })
        .collect()
}

/// One HMC iteration: full refresh, `n` leapfrog steps, one Metropolis test.
///
/// A rejection keeps `(theta, rho')`.
pub fn hmc_step<M, R>(model: &M, z: &PhasePoint, cfg: &HmcConfig, rng: &mut R) -> IterationOutcome
where
    M: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let momentum = sample_momentum(&cfg.mass, rng);
    let current = PhasePoint::new(z.position.clone(), momentum);
    let flow = leapfrog_steps(model, &current, cfg.step_size, cfg.steps, &cfg.mass);
    let log_accept = if flow.divergent {
        f64::NEG_INFINITY
    } else {
        let h0 = cfg.mass.kinetic_energy(&current.momentum) - flow.start_log_density;
        let h1 = cfg.mass.kinetic_energy(&flow.point.momentum) - flow.end_log_density;
        let log_ratio = h0 - h1;
        if log_ratio.is_nan() {
            f64::NEG_INFINITY
        } else {
            log_ratio.min(0.0)
        }
    };
    let accept_prob = log_accept.exp();
    let u: f64 = rng.random();
    let accepted = u < accept_prob;
    let record = ProposalRecord {
        stage: 1,
        step_size: cfg.step_size,
        steps: cfg.steps,
        proposal: flow.point.clone(),
        accept_prob,
        log_accept,
        divergent: flow.divergent,
        grad_evals: flow.grad_evals,
    };
    IterationOutcome {
        next: if accepted { flow.point } else { current },
        accepted_stage: accepted.then_some(1),
        accepted_step_size: accepted.then_some(cfg.step_size),
        grad_evals: flow.grad_evals,
        guard_hits: 0,
        divergences: u64::from(flow.divergent),
        records: vec![record],
    }
}
