use std::f64::consts::LN_2;

use super::math::{cauchy_lpdf, half_cauchy_dlog, half_cauchy_lpdf, log_sech2, normal_lpdf};
use super::LogDensity;
use crate::{Error, Result};

const MU_SCALE: f64 = 10.0;
const SIGMA_SCALE: f64 = 5.0;

/// Stochastic volatility with AR(1) log-volatility.
///
/// Parameters: `[mu, log_sigma, atanh_phi, h_1 .. h_T]`. Returns follow
/// `y_t ~ N(0, exp(h_t / 2))`, i.e. `exp(h_t)` is the return variance.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticVolatility {
    y2: Vec<f64>,
}

impl StochasticVolatility {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::InvalidData("stochastic volatility needs >= 2 returns".into()));
        }
        Ok(Self { y2: y.iter().map(|v| v * v).collect() })
    }

    pub fn len(&self) -> usize {
        self.y2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y2.is_empty()
    }
}

impl LogDensity for StochasticVolatility {
    fn dim(&self) -> usize {
        self.y2.len() + 3
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let mu = theta[0];
        let log_sigma = theta[1];
        let u = theta[2];
        let h = &theta[3..];
        let sigma = log_sigma.exp();
        let inv_s2 = (-2.0 * log_sigma).exp();
        let phi = u.tanh();
        let log_one_m_phi2 = log_sech2(u);
        let one_m_phi2 = log_one_m_phi2.exp();

        // priors, uniform(-1, 1) on phi, and the two Jacobians
        let mut lp = cauchy_lpdf(mu, MU_SCALE)
            + half_cauchy_lpdf(sigma, SIGMA_SCALE)
            + log_sigma
            - LN_2
            + log_one_m_phi2;
        let mut d_mu = -2.0 * mu / (MU_SCALE * MU_SCALE + mu * mu);
        let mut d_log_sigma = 1.0 + half_cauchy_dlog(sigma, SIGMA_SCALE);
        let mut d_u = -2.0 * phi;

        let gh = &mut grad[3..];

        // stationary initial state: sd = sigma / sqrt(1 - phi^2)
        let e1 = h[0] - mu;
        lp += normal_lpdf(h[0], mu, sigma * (-0.5 * log_one_m_phi2).exp());
        d_mu += e1 * one_m_phi2 * inv_s2;
        d_log_sigma += e1 * e1 * one_m_phi2 * inv_s2 - 1.0;
        let mut d_phi_terms = e1 * e1 * phi * inv_s2;
        d_u -= phi;
        gh[0] = -e1 * one_m_phi2 * inv_s2;

        for t in 1..h.len() {
            let prev = h[t - 1] - mu;
            let e = h[t] - mu - phi * prev;
            lp += normal_lpdf(e, 0.0, sigma);
            d_mu += e * (1.0 - phi) * inv_s2;
            d_log_sigma += e * e * inv_s2 - 1.0;
            d_phi_terms += e * prev * inv_s2;
            gh[t] = -e * inv_s2;
            gh[t - 1] += phi * e * inv_s2;
        }
        d_u += one_m_phi2 * d_phi_terms;

        for (t, (&ht, &y2)) in h.iter().zip(&self.y2).enumerate() {
            let scaled = y2 * (-ht).exp();
            lp += normal_lpdf(0.0, 0.0, 1.0) - 0.5 * ht - 0.5 * scaled;
            gh[t] += -0.5 + 0.5 * scaled;
        }

        grad[0] = d_mu;
        grad[1] = d_log_sigma;
        grad[2] = d_u;
        lp
    }

    fn param_names(&self) -> Vec<String> {
        ["mu", "log_sigma", "atanh_phi"]
            .into_iter()
            .map(String::from)
            .chain((1..=self.y2.len()).map(|t| format!("h_{t}")))
            .collect()
    }
}
