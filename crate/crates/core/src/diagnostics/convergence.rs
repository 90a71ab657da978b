//! Split-chain rank-normalized R-hat and FFT-based effective sample size.
//!
//! R-hat follows Vehtari, Gelman, Simpson, Carpenter and Bürkner (2021):
//!
//! 1. Each chain of length `n` is split into two halves of length
//!    `n / 2` (the middle draw is dropped when `n` is odd).
//! 2. Pooled draws are replaced by normal scores
//!    `z = Phi^-1((rank - 3/8) / (S + 1/4))` using average ranks.
//! 3. With `m` split chains, `W` is the mean within-chain variance, `B / n`
//!    the variance of chain means, `var+ = (n - 1) / n W + B / n` and
//!    `R = sqrt(var+ / W)`.
//! 4. The reported value is the maximum of the bulk statistic (on `z`) and
//!    the tail statistic (on normal scores of `|theta - median|`).
//!
//! ESS uses the multi-chain autocorrelation estimate
//! `rho_t = 1 - (W - mean_j acov_j(t)) / var+` truncated by Geyer's initial
//! monotone positive sequence, `tau = -1 + 2 sum_t (rho_2t + rho_2t+1)`
//! and `ESS = m n / tau`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use super::summary::{average_ranks, quantile_sorted};
use crate::{Error, Result};

fn check_chains(chains: &[&[f64]]) -> Result<usize> {
    let n = chains.first().map(|c| c.len()).ok_or(Error::Empty("chains"))?;
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidData("chains must have equal length".into()));
    }
    if n < 4 {
        return Err(Error::Empty("chains shorter than 4 draws"));
    }
    Ok(n)
}

fn split<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let half = chains[0].len() / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect()
}

fn rank_normalize(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let ranks = average_ranks(&pooled);
    let s = pooled.len() as f64;
    let std = Normal::standard();
    let mut scores = ranks.into_iter().map(|r| std.inverse_cdf((r - 0.375) / (s + 0.25)));
    chains
        .iter()
        .map(|c| scores.by_ref().take(c.len()).collect())
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Classic potential scale reduction on already split chains.
fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let b_over_n = variance(&means);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Rank-normalized split R-hat (maximum of bulk and tail versions).
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    check_chains(chains)?;
    let halves = split(chains);
    let bulk = basic_rhat(&rank_normalize(&halves));
    let mut pooled: Vec<f64> = halves.iter().flat_map(|c| c.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let med = quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> =
        halves.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let folded_refs: Vec<&[f64]> = folded.iter().map(Vec::as_slice).collect();
    let tail = basic_rhat(&rank_normalize(&folded_refs));
    Ok(bulk.max(tail))
}

/// Biased autocovariance `acov(t) = sum_i (x_i - m)(x_{i+t} - m) / n` for all lags.
pub fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|c| c.re * scale).collect()
}

/// Autocorrelation function of one series.
pub fn autocorrelation(x: &[f64]) -> Vec<f64> {
    let acov = autocovariance(x);
    match acov.first() {
        Some(&c0) if c0 > 0.0 => acov.iter().map(|c| c / c0).collect(),
        _ => vec![1.0; acov.len()],
    }
}

/// Integrated autocorrelation time across chains, in draws.
pub fn integrated_autocorr_time(chains: &[&[f64]]) -> Result<f64> {
    let n = check_chains(chains)?;
    let m = chains.len() as f64;
    let acovs: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let nf = n as f64;
    let chain_var: Vec<f64> = acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).collect();
    let w = chain_var.iter().sum::<f64>() / m;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b_over_n = if chains.len() > 1 { variance(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return Ok(1.0);
    }
    let rho = |t: usize| {
        let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = (if t == 0 { 1.0 } else { rho(t) }) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = -1.0 + 2.0 * sum;
    Ok(tau.max(1.0 / (m * nf).log10()))
}

/// Effective sample size of the pooled chains.
pub fn effective_sample_size(chains: &[&[f64]]) -> Result<f64> {
    let tau = integrated_autocorr_time(chains)?;
    Ok(chains.len() as f64 * chains[0].len() as f64 / tau)
}

/// Thinning interval `max(1, round(tau))`.
pub fn thinning_interval(tau: f64) -> usize {
    if tau.is_finite() {
        (tau.round() as usize).max(1)
    } else {
        usize::MAX
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let noise = iid(n, seed);
        let mut x = vec![0.0; n];
        let s = (1.0 - phi * phi).sqrt();
        x[0] = noise[0];
        for i in 1..n {
            x[i] = phi * x[i - 1] + s * noise[i];
        }
        x
    }

    #[test]
    fn autocovariance_matches_direct_sum() {
        let x = iid(37, 1);
        let fast = autocovariance(&x);
        let m = mean(&x);
        for t in [0, 1, 5, 36] {
            let direct: f64 =
                (0..37 - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>() / 37.0;
            assert!((fast[t] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_draws_have_unit_tau() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| iid(5_000, s)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let tau = integrated_autocorr_time(&refs).unwrap();
        assert!((tau - 1.0).abs() < 0.1, "{tau}");
        assert_eq!(thinning_interval(tau), 1);
        assert!(split_rhat(&refs).unwrap() < 1.01);
    }

    #[test]
    fn ar1_tau_is_close_to_theory() {
        let phi = 0.8;
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(50_000, phi, 10 + s)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let tau = integrated_autocorr_time(&refs).unwrap();
        let exact = (1.0 + phi) / (1.0 - phi);
        assert!((tau - exact).abs() / exact < 0.1, "{tau} vs {exact}");
    }

    #[test]
    fn shifted_chain_inflates_rhat() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| iid(1_000, s)).collect();
        chains[3].iter_mut().for_each(|v| *v += 1.0);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        assert!(split_rhat(&refs).unwrap() > 1.05);
    }

    #[test]
    fn scale_mismatch_shows_in_tail_rhat() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|s| iid(2_000, 40 + s)).collect();
        chains[0].iter_mut().for_each(|v| *v *= 3.0);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        assert!(split_rhat(&refs).unwrap() > 1.01);
    }

    #[test]
    fn rejects_ragged_chains() {
        let a = [0.0; 10];
        let b = [0.0; 9];
        assert!(split_rhat(&[&a, &b]).is_err());
        assert!(split_rhat(&[]).is_err());
    }
}
