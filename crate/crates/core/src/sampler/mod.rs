//! Transition kernels and the chain driver.

mod chain;
mod config;
mod delayed;
mod hmc;
mod tuning;

pub use chain::{
    chain_rng, run_chain, run_chain_recording, transition, ChainOutput, ChainRng, ChainStats, IterationMeta};
pub use config::{DrGhmcConfig, DrHmcConfig, HmcConfig, SamplerConfig, SamplerKind};
pub use delayed::{
    drghmc_step, drhmc_step, stack_grad_cost, IterationOutcome, ProposalRecord, ProposalStack,
    BALANCE_GUARD,
};
pub use hmc::{hmc_step, partial_momentum_refresh, sample_momentum};
pub use tuning::{diagonal_mass_from_pilot, tune_step_size, StepSizeTuning, TuningOptions};
