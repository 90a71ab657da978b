//! Curvature of the funnel: negative log density and Hessian condition number.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::model::{Funnel, LogDensity};

/// `max |lambda| / min |lambda|` of a symmetric matrix given row-major;
/// infinite when the matrix is singular.
pub fn condition_number(dim: usize, row_major: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(dim, dim, row_major);
    let eig = SymmetricEigen::new(m).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == 0.0 || !lo.is_finite() || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionRow {
    pub x: f64,
    pub y: f64,
    pub neg_log_density: f64,
    pub condition_number: f64,
}

/// Evaluates every `(x, y)` pair, embedded with all latent coordinates
/// equal to `y`. Rows are ordered with `x` outermost.
pub fn condition_number_field(funnel: &Funnel, xs: &[f64], ys: &[f64]) -> Vec<ConditionRow> {
    let dim = funnel.dim();
    let mut rows = Vec::with_capacity(xs.len() * ys.len());
    for &x in xs {
        for &y in ys {
            let theta = funnel.embed(x, y);
            rows.push(ConditionRow {
                x,
                y,
                neg_log_density: -funnel.log_density(&theta),
                condition_number: condition_number(dim, &funnel.neg_log_density_hessian(&theta)),
            });
        }
    }
    rows
}
