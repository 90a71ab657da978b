use super::math::{normal_lpdf, HALF_LN_2PI};
use super::LogDensity;
use crate::{Error, Result};

/// Prior sd of the log-scale coordinate.
pub const FUNNEL_SCALE_SD: f64 = 3.0;

/// Neal's funnel: `x ~ N(0, 3)`, `y_i ~ N(0, exp(x / 2))` for `i < D`.
///
/// Coordinate 0 is `x`; coordinates `1..D` are the `y_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Funnel {
    dim: usize,
}

impl Funnel {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("funnel dimension must be >= 2, got {dim}")));
        }
        Ok(Self { dim })
    }

    /// Dense Hessian of `-log pi` at `theta`, row-major `D x D`.
    pub fn neg_log_density_hessian(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let x = theta[0];
        let ex = (-x).exp();
        let mut h = vec![0.0; d * d];
        let sum_y2: f64 = theta[1..].iter().map(|y| y * y).sum();
        h[0] = 1.0 / (FUNNEL_SCALE_SD * FUNNEL_SCALE_SD) + 0.5 * sum_y2 * ex;
        for i in 1..d {
            let cross = -theta[i] * ex;
            h[i] = cross;
            h[i * d] = cross;
            h[i * d + i] = ex;
        }
        h
    }

    /// Embeds a 2D `(x, y)` coordinate by repeating `y` across every latent.
    pub fn embed(&self, x: f64, y: f64) -> Vec<f64> {
        let mut theta = vec![y; self.dim];
        theta[0] = x;
        theta
    }
}

impl LogDensity for Funnel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let x = theta[0];
        let ex = (-x).exp();
        let n = (self.dim - 1) as f64;
        let sum_y2: f64 = theta[1..].iter().map(|y| y * y).sum();
        normal_lpdf(x, 0.0, FUNNEL_SCALE_SD) - n * (HALF_LN_2PI + 0.5 * x) - 0.5 * sum_y2 * ex
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let x = theta[0];
        let ex = (-x).exp();
        let n = (self.dim - 1) as f64;
        let mut sum_y2 = 0.0;
        for (g, y) in grad[1..].iter_mut().zip(&theta[1..]) {
            sum_y2 += y * y;
            *g = -y * ex;
        }
        grad[0] = -x / (FUNNEL_SCALE_SD * FUNNEL_SCALE_SD) - 0.5 * n + 0.5 * sum_y2 * ex;
        normal_lpdf(x, 0.0, FUNNEL_SCALE_SD) - n * (HALF_LN_2PI + 0.5 * x) - 0.5 * sum_y2 * ex
    }

    fn param_names(&self) -> Vec<String> {
        std::iter::once("x".to_string())
            .chain((1..self.dim).map(|i| format!("y_{i}")))
            .collect()
    }
}
