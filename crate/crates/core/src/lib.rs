//! Delayed rejection generalized Hamiltonian Monte Carlo.
//!
//! The crate is split along the lines of a sampling experiment:
//!
//! - [`model`]: target densities with analytic gradients (Neal's funnel,
//!   correlated Gaussians, eight schools, stochastic volatility, 2PL IRT).
//! - [`integrator`]: phase points, the leapfrog map, momentum flips and the
//!   staged proposal maps `F_k`.
//! - [`sampler`]: DR-G-HMC, DR-HMC, G-HMC and HMC transition kernels plus a
//!   gradient-budgeted chain driver.
//! - [`reference`]: analytic and long-run reference draws.
//! - [`diagnostics`]: standardized error, error curves, step-size maps,
//!   histograms, Hessian condition fields, R-hat and ESS.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod model;
pub mod reference;
pub mod sampler;

pub use error::{Error, Result};
pub use integrator::{MassMatrix, PhasePoint};
pub use model::{build_model, LogDensity, ModelSpec};
pub use sampler::{run_chain, ChainOutput, SamplerConfig};
