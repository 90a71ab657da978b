use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SamplerConfig;
use super::delayed::{drghmc_step, drhmc_step, IterationOutcome};
use super::hmc::{hmc_step, sample_momentum};
use super::DrGhmcConfig;
use crate::integrator::PhasePoint;
use crate::model::LogDensity;
use crate::{Error, Result};

pub type ChainRng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dispatches one transition of the configured sampler.
pub fn transition<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    z: &PhasePoint,
    rng: &mut ChainRng,
) -> IterationOutcome {
    match config {
        SamplerConfig::DrGhmc(c) => drghmc_step(model, z, c, rng),
        SamplerConfig::Ghmc(c) => {
            let single = DrGhmcConfig { max_proposals: 1, ..c.clone() };
            drghmc_step(model, z, &single, rng)
        }
        SamplerConfig::DrHmc(c) => drhmc_step(model, z, c, rng),
        SamplerConfig::Hmc(c) => hmc_step(model, z, c, rng),
    }
}

/// Per-draw annotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMeta {
    pub iter: u64,
    /// Gradient evaluations spent up to and including this iteration.
    pub cum_grads: u64,
    /// 1-based accepted stage, 0 when every proposal was rejected.
    pub accepted_stage: u32,
    /// Step size of the accepted stage, 0 when rejected.
    pub accepted_step_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainStats {
    pub iterations: u64,
    pub grad_evals: u64,
    pub divergences: u64,
    pub guard_hits: u64,
    /// Index 0 counts full rejections, index `k` acceptances at stage `k`.
    pub accepted_by_stage: Vec<u64>,
}

/// Draws of one chain, including the initial position as draw 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub dim: usize,
    positions: Vec<f64>,
    pub meta: Vec<IterationMeta>,
    pub stats: ChainStats,
    pub final_state: PhasePoint,
}

impl ChainOutput {
    pub fn from_parts(dim: usize, positions: Vec<f64>, meta: Vec<IterationMeta>) -> Self {
        assert_eq!(positions.len(), dim * meta.len());
        let last = positions[positions.len() - dim..].to_vec();
        Self {
            dim,
            positions,
            meta,
            stats: ChainStats::default(),
            final_state: PhasePoint::new(last, vec![0.0; dim]),
        }
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        self.draws().map(|row| row[d]).collect()
    }

    /// Number of leading draws whose cumulative gradient count is `<= budget`.
    pub fn len_within(&self, budget: u64) -> usize {
        self.meta.partition_point(|m| m.cum_grads <= budget)
    }
}

/// Runs one chain until its cumulative gradient count reaches `budget`.
///
/// The RNG is stream `chain_id` of the config's seed; the starting momentum
/// is drawn from `N(0, M)`. The final iteration may overshoot the budget.
pub fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    init: &[f64],
    budget: u64,
    chain_id: u64,
) -> Result<ChainOutput> {
    run_chain_recording(model, config, init, budget, chain_id, 1)
}

/// Like [`run_chain`] but stores only the initial draw and every
/// `record_every`-th iteration; statistics still cover every iteration.
pub fn run_chain_recording<M: LogDensity + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    init: &[f64],
    budget: u64,
    chain_id: u64,
    record_every: u64,
) -> Result<ChainOutput> {
    config.validate()?;
    if record_every == 0 {
        return Err(Error::InvalidConfig("record_every must be at least 1".into()));
    }
    let dim = model.dim();
    if init.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: init.len() });
    }
    if config.mass().dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: config.mass().dim() });
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("initial position must be finite".into()));
    }

    let mut rng = chain_rng(config.seed(), chain_id);
    let mut state = PhasePoint::new(init.to_vec(), sample_momentum(config.mass(), &mut rng));
    let mut positions = init.to_vec();
    let mut meta = vec![IterationMeta {
        iter: 0,
        cum_grads: 0,
        accepted_stage: 0,
        accepted_step_size: 0.0,
    }];
    let mut stats = ChainStats { accepted_by_stage: vec![0], ..ChainStats::default() };

    while stats.grad_evals < budget {
        let out = transition(model, config, &state, &mut rng);
        stats.iterations += 1;
        stats.grad_evals += out.grad_evals;
        stats.divergences += out.divergences;
        stats.guard_hits += out.guard_hits;
        let stage = out.accepted_stage.unwrap_or(0);
        if stats.accepted_by_stage.len() <= stage {
            stats.accepted_by_stage.resize(stage + 1, 0);
        }
        stats.accepted_by_stage[stage] += 1;
        if stats.iterations.is_multiple_of(record_every) {
            positions.extend_from_slice(&out.next.position);
            meta.push(IterationMeta {
                iter: stats.iterations,
                cum_grads: stats.grad_evals,
                accepted_stage: stage as u32,
                accepted_step_size: out.accepted_step_size.unwrap_or(0.0),
            });
        }
        state = out.next;
    }

    Ok(ChainOutput { dim, positions, meta, stats, final_state: state })
}
