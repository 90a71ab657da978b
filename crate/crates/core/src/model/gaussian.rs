use super::math::HALF_LN_2PI;
use super::LogDensity;
use crate::{Error, Result};

/// Zero-mean Gaussian with AR(1) covariance `Sigma_ij = rho^|i - j|`.
///
/// The precision matrix is tridiagonal, so density and gradient are `O(D)`.
/// `rho = 0` gives iid standard normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatedGaussian {
    dim: usize,
    rho: f64,
    log_norm: f64,
}

impl CorrelatedGaussian {
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("gaussian dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!("rho = {rho} outside [0, 1)")));
        }
        let log_det = (dim - 1) as f64 * (1.0 - rho * rho).ln();
        Ok(Self { dim, rho, log_norm: -(dim as f64) * HALF_LN_2PI - 0.5 * log_det })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Dense covariance, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] = self.rho.powi(i.abs_diff(j) as i32);
            }
        }
        cov
    }

    /// `Q theta` for the tridiagonal precision `Q`.
    fn precision_times(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let rho = self.rho;
        let scale = 1.0 / (1.0 - rho * rho);
        for i in 0..d {
            let diag = if i == 0 || i == d - 1 { 1.0 } else { 1.0 + rho * rho };
            let mut v = diag * theta[i];
            if i > 0 {
                v -= rho * theta[i - 1];
            }
            if i + 1 < d {
                v -= rho * theta[i + 1];
            }
            out[i] = scale * v;
        }
    }
}

impl LogDensity for CorrelatedGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64]) -> f64 {
        let mut q = vec![0.0; self.dim];
        self.log_density_grad(theta, &mut q)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.precision_times(theta, grad);
        let quad: f64 = grad.iter().zip(theta).map(|(q, t)| q * t).sum();
        for g in grad.iter_mut() {
            *g = -*g;
        }
        self.log_norm - 0.5 * quad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::math::normal_lpdf;

    #[test]
    fn standard_normal_at_mode() {
        let g = CorrelatedGaussian::new(1, 0.0).unwrap();
        assert!((g.log_density(&[0.0]) + HALF_LN_2PI).abs() < 1e-15);
        let mut grad = [0.0];
        g.log_density_grad(&[2.0], &mut grad);
        assert_eq!(grad[0], -2.0);
    }

    #[test]
    fn zero_rho_is_iid() {
        let g = CorrelatedGaussian::new(100, 0.0).unwrap();
        let theta: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let iid: f64 = theta.iter().map(|&t| normal_lpdf(t, 0.0, 1.0)).sum();
        assert!((g.log_density(&theta) - iid).abs() < 1e-10);
    }

    #[test]
    fn precision_inverts_covariance() {
        let g = CorrelatedGaussian::new(6, 0.7).unwrap();
        let cov = g.covariance();
        for col in 0..6 {
            let column: Vec<f64> = (0..6).map(|r| cov[r * 6 + col]).collect();
            let mut out = vec![0.0; 6];
            g.precision_times(&column, &mut out);
            for (r, v) in out.iter().enumerate() {
                let expected = if r == col { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_dim_density_matches_closed_form() {
        let rho = 0.5;
        let g = CorrelatedGaussian::new(2, rho).unwrap();
        let (a, b) = (0.3, -1.1);
        let det: f64 = 1.0 - rho * rho;
        let quad = (a * a - 2.0 * rho * a * b + b * b) / det;
        let expected = -2.0 * HALF_LN_2PI - 0.5 * det.ln() - 0.5 * quad;
        assert!((g.log_density(&[a, b]) - expected).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_rho() {
        assert!(CorrelatedGaussian::new(3, 1.0).is_err());
        assert!(CorrelatedGaussian::new(3, -0.1).is_err());
        assert!(CorrelatedGaussian::new(0, 0.1).is_err());
    }
}
