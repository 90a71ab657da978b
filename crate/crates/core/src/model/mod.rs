//! Target densities.
//!
//! Every bundled model lives on the unconstrained scale: positive scales are
//! log-transformed and the autoregressive coefficient of the stochastic
//! volatility model is `atanh`-transformed, each with its log-Jacobian added
//! to the density. Log densities keep their full normalizing constants.

mod data;
mod eight_schools;
mod funnel;
mod gaussian;
mod irt;
pub(crate) mod math;
mod stoch_vol;

use std::fmt;
use std::sync::Arc;

pub use data::{
    synthesize_irt, synthesize_stoch_vol, DatasetBundle, IRT_SEED, NORMAL100_RHO, STOCH_VOL_SEED,
};
pub use eight_schools::EightSchools;
pub use funnel::Funnel;
pub use gaussian::CorrelatedGaussian;
pub use irt::Irt2pl;
pub use stoch_vol::StochasticVolatility;

use crate::{Error, Result};

/// A differentiable log density on `R^D`.
///
/// Implementations must be pure: the same `theta` always yields the same
/// value and gradient, so one instance can be shared across chains.
pub trait LogDensity: Send + Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn param_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|d| format!("theta_{d}")).collect()
    }
}

/// A named, immutable target density.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    target: Arc<dyn LogDensity>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .finish()
    }
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, target: impl LogDensity + 'static) -> Self {
        Self { name: name.into(), target: Arc::new(target) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &dyn LogDensity {
        self.target.as_ref()
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: theta.len() });
        }
        Ok(())
    }

    /// Log density with a dimension check.
    pub fn checked_log_density(&self, theta: &[f64]) -> Result<f64> {
        self.check(theta)?;
        Ok(self.target.log_density(theta))
    }

    /// Gradient of the log density with a dimension check.
    pub fn grad_log_density(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check(theta)?;
        let mut grad = vec![0.0; self.dim()];
        self.target.log_density_grad(theta, &mut grad);
        Ok(grad)
    }
}

impl LogDensity for ModelSpec {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        self.target.log_density(theta)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.target.log_density_grad(theta, grad)
    }

    fn param_names(&self) -> Vec<String> {
        self.target.param_names()
    }
}

/// Names accepted by [`build_model`].
pub const MODEL_NAMES: [&str; 6] =
    ["funnel", "gaussian", "eight_schools", "normal100", "stoch_vol", "irt_2pl"];

/// Construction options for [`build_model`].
#[derive(Debug, Clone, Default)]
pub struct ModelOptions {
    /// Dimension for `funnel` (default 10) and `gaussian` (default 1).
    pub dimension: Option<usize>,
    /// Observed data; the bundled dataset is used when absent.
    pub data: Option<DatasetBundle>,
}

impl ModelOptions {
    pub fn with_dimension(dimension: usize) -> Self {
        Self { dimension: Some(dimension), data: None }
    }
}

pub fn build_model(name: &str, options: ModelOptions) -> Result<ModelSpec> {
    let data = match options.data {
        Some(d) => Some(d),
        None => DatasetBundle::bundled(name)?,
    };
    let wrong_data = || Error::MissingData(name.to_string());
    let spec = match name {
        "funnel" => ModelSpec::new(name, Funnel::new(options.dimension.unwrap_or(10))?),
        "gaussian" => {
            let rho = match data {
                Some(DatasetBundle::Normal { rho }) => rho,
                Some(_) => return Err(wrong_data()),
                None => 0.0,
            };
            ModelSpec::new(name, CorrelatedGaussian::new(options.dimension.unwrap_or(1), rho)?)
        }
        "normal100" => match data {
            Some(DatasetBundle::Normal { rho }) => {
                ModelSpec::new(name, CorrelatedGaussian::new(100, rho)?)
            }
            _ => return Err(wrong_data()),
        },
        "eight_schools" => match data {
            Some(DatasetBundle::EightSchools { y, sigma }) => {
                ModelSpec::new(name, EightSchools::new(y, sigma)?)
            }
            _ => return Err(wrong_data()),
        },
        "stoch_vol" => match data {
            Some(DatasetBundle::StochVol { y }) => {
                ModelSpec::new(name, StochasticVolatility::new(y)?)
            }
            _ => return Err(wrong_data()),
        },
        "irt_2pl" => match data {
            Some(DatasetBundle::Irt { students, questions, y }) => {
                ModelSpec::new(name, Irt2pl::new(students, questions, y)?)
            }
            _ => return Err(wrong_data()),
        },
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(spec)
}
