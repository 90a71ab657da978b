//! Where delayed rejection ends up accepting: mean accepted step size by
//! position.

use rayon::prelude::*;
use serde::Serialize;

use crate::integrator::PhasePoint;
use crate::model::{Funnel, LogDensity};
use crate::sampler::{chain_rng, drghmc_step, sample_momentum, ChainOutput, DrGhmcConfig};
use crate::{Error, MassMatrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    pub step_size: f64,
    pub reduction: f64,
    pub max_proposals: usize,
    pub damping: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { step_size: 2.0, reduction: 4.0, max_proposals: 10, damping: 0.08, trials: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub x: f64,
    pub y: f64,
    /// Mean accepted step size; NaN when every trial was rejected.
    pub mean_accepted_step: f64,
    pub accepted: usize,
    pub rejected: usize,
}

/// Runs `trials` single DR-G-HMC iterations from each funnel point
/// (`x`, all latents `y`), each with fresh momentum `N(0, I)`, and averages
/// the step size of accepted proposals. Point `i` uses RNG stream `i`.
pub fn probe_accepted_step_size(
    funnel: &Funnel,
    points: &[(f64, f64)],
    opts: &ProbeOptions,
) -> Result<Vec<ProbeRow>> {
    let dim = funnel.dim();
    let cfg = DrGhmcConfig {
        max_proposals: opts.max_proposals,
        damping: opts.damping,
        step_size: opts.step_size,
        reduction: opts.reduction,
        steps: 1,
        mass: MassMatrix::identity(dim),
        seed: opts.seed,
    };
    cfg.validate()?;
    if opts.trials == 0 {
        return Err(Error::InvalidConfig("probe needs at least one trial".into()));
    }
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let mut rng = chain_rng(opts.seed, i as u64);
            let position = funnel.embed(x, y);
            let (mut sum, mut accepted) = (0.0, 0);
            for _ in 0..opts.trials {
                let z = PhasePoint::new(position.clone(), sample_momentum(&cfg.mass, &mut rng));
                let out = drghmc_step(funnel, &z, &cfg, &mut rng);
                if let Some(eps) = out.accepted_step_size {
                    sum += eps;
                    accepted += 1;
                }
            }
            ProbeRow {
                x,
                y,
                mean_accepted_step: if accepted > 0 { sum / accepted as f64 } else { f64::NAN },
                accepted,
                rejected: opts.trials - accepted,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepBin {
    pub low: f64,
    pub high: f64,
    pub mean_accepted_step: f64,
    pub accepted: u64,
    pub rejected: u64,
}

/// Bins each transition by coordinate `dim` of its starting draw and
/// averages the accepted step sizes. Rejected transitions are only counted.
pub fn stepsize_map_from_chains(
    chains: &[ChainOutput],
    dim: usize,
    low: f64,
    high: f64,
    bins: usize,
) -> Result<Vec<StepBin>> {
    if bins == 0 || !(low < high) {
        return Err(Error::InvalidConfig("bad step-size map bins".into()));
    }
    let width = (high - low) / bins as f64;
    let mut sums = vec![0.0; bins];
    let mut acc = vec![0u64; bins];
    let mut rej = vec![0u64; bins];
    for c in chains {
        if dim >= c.dim {
            return Err(Error::DimensionMismatch { expected: c.dim, actual: dim + 1 });
        }
        for i in 1..c.len() {
            let v = c.draw(i - 1)[dim];
            if !(low..=high).contains(&v) {
                continue;
            }
            let b = (((v - low) / width) as usize).min(bins - 1);
            match c.meta[i].accepted_stage {
                0 => rej[b] += 1,
                _ => {
                    acc[b] += 1;
                    sums[b] += c.meta[i].accepted_step_size;
                }
            }
        }
    }
    Ok((0..bins)
        .map(|b| StepBin {
            low: low + width * b as f64,
            high: low + width * (b + 1) as f64,
            mean_accepted_step: if acc[b] > 0 { sums[b] / acc[b] as f64 } else { f64::NAN },
            accepted: acc[b],
            rejected: rej[b],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_proposal_accepts_only_initial_step() {
        let f = Funnel::new(10).unwrap();
        let opts = ProbeOptions { max_proposals: 1, trials: 50, ..ProbeOptions::default() };
        let rows = probe_accepted_step_size(&f, &[(0.0, 0.0), (2.0, 1.0)], &opts).unwrap();
        for r in rows {
            assert_eq!(r.accepted + r.rejected, 50);
            if r.accepted > 0 {
                assert_eq!(r.mean_accepted_step, 2.0);
            }
        }
    }

    #[test]
    fn mouth_accepts_larger_steps_than_neck() {
        let f = Funnel::new(10).unwrap();
        let rows = probe_accepted_step_size(&f, &[(-4.0, 0.0), (4.0, 0.0)], &ProbeOptions::default())
            .unwrap();
        assert!(rows[1].mean_accepted_step > rows[0].mean_accepted_step, "{rows:?}");
    }
}
