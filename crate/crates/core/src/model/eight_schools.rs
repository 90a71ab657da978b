use super::math::{half_cauchy_dlog, half_cauchy_lpdf, normal_lpdf};
use super::LogDensity;
use crate::{Error, Result};

const MU_SD: f64 = 5.0;
const TAU_SCALE: f64 = 5.0;

/// Centered eight-schools hierarchy on the unconstrained scale.
///
/// Parameters: `[mu, log_tau, theta_1 .. theta_J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EightSchools {
    y: Vec<f64>,
    sigma: Vec<f64>,
}

impl EightSchools {
    pub fn new(y: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != sigma.len() || sigma.iter().any(|s| *s <= 0.0) {
            return Err(Error::InvalidData("eight schools needs matching y and positive sigma".into()));
        }
        Ok(Self { y, sigma })
    }
}

impl LogDensity for EightSchools {
    fn dim(&self) -> usize {
        self.y.len() + 2
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mu = theta[0];
        let log_tau = theta[1];
        let tau = log_tau.exp();
        let inv_tau2 = (-2.0 * log_tau).exp();

        let mut lp = normal_lpdf(mu, 0.0, MU_SD) + half_cauchy_lpdf(tau, TAU_SCALE) + log_tau;
        let mut d_mu = -mu / (MU_SD * MU_SD);
        let mut d_log_tau = 1.0 + half_cauchy_dlog(tau, TAU_SCALE);

        for (j, ((&t, &y), &s)) in theta[2..].iter().zip(&self.y).zip(&self.sigma).enumerate() {
            let dev = t - mu;
            lp += normal_lpdf(t, mu, tau) + normal_lpdf(y, t, s);
            d_mu += dev * inv_tau2;
            d_log_tau += dev * dev * inv_tau2 - 1.0;
            grad[2 + j] = -dev * inv_tau2 - (t - y) / (s * s);
        }
        grad[0] = d_mu;
        grad[1] = d_log_tau;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        ["mu".to_string(), "log_tau".to_string()]
            .into_iter()
            .chain((1..=self.y.len()).map(|j| format!("theta_{j}")))
            .collect()
    }
}
