//! Delayed-rejection acceptance with ghost states.
//!
//! From a state `x`, stage `k` proposes `y = F_k(x)` and accepts with
//!
//! ```text
//! alpha_k(x, y) = min(1, pi~(y) / pi~(x)
//!                     * prod_{i<k} (1 - alpha_i(y, F_i(y))) / (1 - alpha_i(x, F_i(x))))
//! ```
//!
//! The denominators are the already rejected stages of `x` and live on a
//! [`ProposalStack`]. The numerators are the rejection probabilities of a
//! hypothetical chain started at `y`; they are computed by building a second
//! stack rooted at `y` (the ghost states), which recursively needs its own
//! ghost stacks. Stage `k` therefore costs `2^(k-1)` proposal-map
//! applications once stages `1..k` are on the stack.
//!
//! Everything is evaluated in log space: `ln(1 - alpha)` is computed as
//! `ln(-expm1(ln alpha))`, so probabilities near 0 or 1 keep full precision.

use rand::Rng;

use super::config::{DrGhmcConfig, DrHmcConfig};
use super::hmc::partial_momentum_refresh;
use crate::integrator::{proposal_map, MassMatrix, PhasePoint, StageSchedule};
use crate::model::LogDensity;

/// A rejected-stage denominator `1 - alpha_i` below this makes `alpha_k = 0`.
pub const BALANCE_GUARD: f64 = 1e-15;

/// One stage of a proposal stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalRecord {
    /// 1-based stage index.
    pub stage: usize,
    pub step_size: f64,
    pub steps: usize,
    /// `F_k(x)`; momentum already flipped.
    pub proposal: PhasePoint,
    pub accept_prob: f64,
    /// `ln alpha_k`, `-inf` when `alpha_k = 0`.
    pub log_accept: f64,
    pub divergent: bool,
    /// Gradient evaluations spent on this stage, ghosts included.
    pub grad_evals: u64,
}

impl ProposalRecord {
    /// `ln(1 - alpha_k)`.
    pub fn log_reject(&self) -> f64 {
        log1m_exp(self.log_accept)
    }
}

/// `ln(1 - exp(a))` for `a <= 0`.
fn log1m_exp(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else {
        (-a.exp_m1()).ln()
    }
}

struct Stage {
    record: ProposalRecord,
    /// `H(F_k(x))`, infinite when divergent.
    proposal_energy: f64,
}

/// The cached stage sequence of one starting state.
///
/// `push_stage` evaluates the next stage; each stage's acceptance
/// probability reads the rejected stages below it from the stack.
pub struct ProposalStack<'a, M: LogDensity + ?Sized> {
    model: &'a M,
    schedule: &'a StageSchedule,
    mass: &'a MassMatrix,
    origin: PhasePoint,
    origin_energy: Option<f64>,
    stages: Vec<Stage>,
    grad_evals: u64,
    guard_hits: u64,
    map_applications: u64,
}

impl<'a, M: LogDensity + ?Sized> ProposalStack<'a, M> {
    pub fn new(
        model: &'a M,
        schedule: &'a StageSchedule,
        mass: &'a MassMatrix,
        origin: PhasePoint,
    ) -> Self {
        Self {
            model,
            schedule,
            mass,
            origin,
            origin_energy: None,
            stages: Vec::new(),
            grad_evals: 0,
            guard_hits: 0,
            map_applications: 0,
        }
    }

    fn with_energy(
        model: &'a M,
        schedule: &'a StageSchedule,
        mass: &'a MassMatrix,
        origin: PhasePoint,
        energy: f64,
    ) -> Self {
        let mut stack = Self::new(model, schedule, mass, origin);
        stack.origin_energy = Some(energy);
        stack
    }

    pub fn origin(&self) -> &PhasePoint {
        &self.origin
    }

    /// `H` at the origin, once any stage has been evaluated.
    pub fn origin_energy(&self) -> Option<f64> {
        self.origin_energy
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn stage(&self, k: usize) -> &ProposalRecord {
        &self.stages[k - 1].record
    }

    pub fn records(&self) -> impl Iterator<Item = &ProposalRecord> {
        self.stages.iter().map(|s| &s.record)
    }

    /// Gradient evaluations so far, ghost stacks included.
    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    /// Stages zeroed by the [`BALANCE_GUARD`], ghost stacks included.
    pub fn guard_hits(&self) -> u64 {
        self.guard_hits
    }

    /// Proposal-map applications so far, ghost stacks included.
    pub fn map_applications(&self) -> u64 {
        self.map_applications
    }

    /// Acceptance probability of stage `k`, evaluating stages up to `k` as needed.
    pub fn accept_prob(&mut self, k: usize) -> f64 {
        while self.stages.len() < k {
            self.push_stage();
        }
        self.stage(k).accept_prob
    }

    /// Evaluates the next stage and returns its record.
    pub fn push_stage(&mut self) -> &ProposalRecord {
        let k = self.stages.len() + 1;
        let flow = proposal_map(self.model, &self.origin, k, self.schedule, self.mass);
        self.map_applications += 1;
        let before = self.grad_evals;
        self.grad_evals += flow.grad_evals;
        let origin_energy = match self.origin_energy {
            Some(e) => e,
            None => {
                let e = self.mass.kinetic_energy(&self.origin.momentum) - flow.start_log_density;
                self.origin_energy = Some(e);
                e
            }
        };

        let (log_accept, proposal_energy) = if flow.divergent {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let energy = self.mass.kinetic_energy(&flow.point.momentum) - flow.end_log_density;
            let log_accept = if energy.is_finite() {
                self.log_accept(k, &flow.point, energy, origin_energy)
            } else {
                f64::NEG_INFINITY
            };
            (log_accept, energy)
        };

        self.stages.push(Stage {
            record: ProposalRecord {
                stage: k,
                step_size: self.schedule.step_size(k),
                steps: self.schedule.steps(k),
                proposal: flow.point,
                accept_prob: log_accept.exp(),
                log_accept,
                divergent: flow.divergent,
                grad_evals: self.grad_evals - before,
            },
            proposal_energy,
        });
        &self.stages[k - 1].record
    }

    /// `ln alpha_k` for a non-divergent proposal `y` with energy `H(y)`.
    fn log_accept(&mut self, k: usize, y: &PhasePoint, y_energy: f64, x_energy: f64) -> f64 {
        let mut log_ratio = x_energy - y_energy;
        if k > 1 {
            let mut ghost = ProposalStack::with_energy(
                self.model,
                self.schedule,
                self.mass,
                y.clone(),
                y_energy,
            );
            for _ in 1..k {
                ghost.push_stage();
            }
            self.grad_evals += ghost.grad_evals;
            self.guard_hits += ghost.guard_hits;
            self.map_applications += ghost.map_applications;

            let mut guarded = false;
            for (rejected, ghost_stage) in self.stages.iter().zip(&ghost.stages) {
                if (-rejected.record.log_accept.exp_m1()) < BALANCE_GUARD {
                    guarded = true;
                }
                log_ratio += ghost_stage.record.log_reject() - rejected.record.log_reject();
            }
            if guarded {
                self.guard_hits += 1;
                return f64::NEG_INFINITY;
            }
        }
        if log_ratio.is_nan() {
            return f64::NEG_INFINITY;
        }
        log_ratio.min(0.0)
    }

    /// `H(F_k(x))`, infinite for a divergent stage.
    pub fn proposal_energy(&self, k: usize) -> f64 {
        self.stages[k - 1].proposal_energy
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub next: PhasePoint,
    /// 1-based accepted stage, `None` when every stage was rejected.
    pub accepted_stage: Option<usize>,
    pub accepted_step_size: Option<f64>,
    pub records: Vec<ProposalRecord>,
    pub grad_evals: u64,
    pub guard_hits: u64,
    pub divergences: u64,
}

/// Shared delayed-rejection transition used by DR-G-HMC and DR-HMC.
pub(crate) fn delayed_rejection_step<M, R>(
    model: &M,
    z: &PhasePoint,
    schedule: &StageSchedule,
    max_proposals: usize,
    damping: f64,
    mass: &MassMatrix,
    rng: &mut R,
) -> IterationOutcome
where
    M: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let momentum = partial_momentum_refresh(&z.momentum, damping, mass, rng);
    let current = PhasePoint::new(z.position.clone(), momentum);
    let mut stack = ProposalStack::new(model, schedule, mass, current);
    let mut accepted = None;
    for k in 1..=max_proposals {
        let alpha = stack.push_stage().accept_prob;
        let u: f64 = rng.random();
        if u < alpha {
            accepted = Some(k);
            break;
        }
    }
    let next = match accepted {
        Some(k) => stack.stage(k).proposal.flip(),
        None => stack.origin().flip(),
    };
    let divergences = stack.records().filter(|r| r.divergent).count() as u64;
    IterationOutcome {
        next,
        accepted_stage: accepted,
        accepted_step_size: accepted.map(|k| schedule.step_size(k)),
        grad_evals: stack.grad_evals(),
        guard_hits: stack.guard_hits(),
        records: stack.records().cloned().collect(),
        divergences,
    }
}

/// One DR-G-HMC iteration: partial momentum refresh, up to `K` proposals
/// with geometrically shrinking step sizes, and a final momentum flip.
pub fn drghmc_step<M, R>(model: &M, z: &PhasePoint, cfg: &DrGhmcConfig, rng: &mut R) -> IterationOutcome
where
    M: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let schedule = cfg.schedule().expect("validated DR-G-HMC config");
    delayed_rejection_step(model, z, &schedule, cfg.max_proposals, cfg.damping, &cfg.mass, rng)
}

/// One DR-HMC iteration: full refresh and `n_k = round(tau / eps_k)` steps per stage.
pub fn drhmc_step<M, R>(model: &M, z: &PhasePoint, cfg: &DrHmcConfig, rng: &mut R) -> IterationOutcome
where
    M: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let schedule = cfg.schedule().expect("validated DR-HMC config");
    delayed_rejection_step(model, z, &schedule, cfg.max_proposals, 1.0, &cfg.mass, rng)
}

/// Closed-form gradient cost of evaluating stages `1..=k` on a fresh stack
/// when no proposal diverges: stage `j` costs `2 n_j` for its own map plus
/// the full cost of a ghost stack of depth `j - 1`.
pub fn stack_grad_cost(schedule: &StageSchedule, k: usize) -> u64 {
    let mut stage_cost: Vec<u64> = Vec::with_capacity(k);
    for j in 1..=k {
        let own = 2 * schedule.steps(j) as u64;
        let ghosts: u64 = stage_cost[..j - 1].iter().sum();
        stage_cost.push(own + ghosts);
    }
    stage_cost.iter().sum()
}
