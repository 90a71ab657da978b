use std::f64::consts::{LN_2, PI};

pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub(crate) fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

/// Half-Cauchy(0, scale) on the positive reals.
#[inline]
pub(crate) fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    LN_2 - PI.ln() - scale.ln() - (z * z).ln_1p()
}

/// d/ds of `half_cauchy_lpdf(exp(s), scale)`, without the Jacobian.
#[inline]
pub(crate) fn half_cauchy_dlog(x: f64, scale: f64) -> f64 {
    let x2 = x * x;
    -2.0 * x2 / (scale * scale + x2)
}

#[inline]
pub(crate) fn cauchy_lpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    -PI.ln() - scale.ln() - (z * z).ln_1p()
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub(crate) fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 - tanh(u)^2)`, finite for every finite `u`.
#[inline]
pub(crate) fn log_sech2(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (LN_2 - a - (-2.0 * a).exp().ln_1p())
}
