//! Fixed-bin histograms and a chi-square goodness-of-fit test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::sampler::ChainOutput;
use crate::{Error, Result};

/// Uniform bins over `[low, high]`. Values equal to `high` land in the last
/// bin; values outside the range (and NaN) are tallied separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(low: f64, high: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(Error::InvalidConfig(format!("bad histogram [{low}, {high}] x {bins}")));
        }
        Ok(Self { low, high, counts: vec![0; bins], underflow: 0, overflow: 0 })
    }

    pub fn width(&self) -> f64 {
        (self.high - self.low) / self.counts.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.width();
        (0..=self.counts.len()).map(|i| self.low + w * i as f64).collect()
    }

    pub fn add(&mut self, x: f64) {
        if x < self.low {
            self.underflow += 1;
        } else if x <= self.high {
            let bins = self.counts.len();
            let i = (((x - self.low) / self.width()) as usize).min(bins - 1);
            self.counts[i] += 1;
        } else {
            self.overflow += 1;
        }
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        values.into_iter().for_each(|x| self.add(x));
    }

    /// Every value added, including out-of-range ones.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Normalized density of bin `i` relative to all values added.
    pub fn density(&self, i: usize) -> f64 {
        self.counts[i] as f64 / (self.total() as f64 * self.width())
    }
}

/// Histogram of coordinate `dim` over the draws of all chains.
pub fn marginal_histogram(
    chains: &[ChainOutput],
    dim: usize,
    low: f64,
    high: f64,
    bins: usize,
) -> Result<Histogram> {
    let mut h = Histogram::new(low, high, bins)?;
    for c in chains {
        if dim >= c.dim {
            return Err(Error::DimensionMismatch { expected: c.dim, actual: dim + 1 });
        }
        h.extend(c.draws().map(|row| row[dim]));
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub observed: Vec<u64>,
    pub expected: f64,
}

/// Pearson chi-square test of `values` against a continuous distribution,
/// using `bins` equiprobable cells with edges from `quantile`.
pub fn chi_square_gof(
    values: &[f64],
    quantile: impl Fn(f64) -> f64,
    bins: usize,
) -> Result<ChiSquareTest> {
    if bins < 2 {
        return Err(Error::InvalidConfig("chi-square test needs at least 2 bins".into()));
    }
    if values.is_empty() {
        return Err(Error::Empty("chi-square sample"));
    }
    let inner: Vec<f64> = (1..bins).map(|i| quantile(i as f64 / bins as f64)).collect();
    let mut observed = vec![0u64; bins];
    for &v in values {
        observed[inner.partition_point(|&e| e <= v)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    let statistic =
        observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum::<f64>();
    let dof = bins - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: chi.sf(statistic), observed, expected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::Normal;

    #[test]
    fn counts_cover_every_value() {
        let mut h = Histogram::new(-1.0, 1.0, 4).unwrap();
        h.extend([-2.0, -1.0, -0.5, 0.0, 0.99, 1.0, 3.0, f64::NAN]);
        assert_eq!(h.counts, vec![1, 1, 1, 2]);
        assert_eq!((h.underflow, h.overflow), (1, 2));
        assert_eq!(h.total(), 8);
        assert_eq!(h.edges(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_bin_holds_everything_in_range() {
        let mut h = Histogram::new(0.0, 1.0, 1).unwrap();
        h.extend([0.0, 0.3, 1.0]);
        assert_eq!(h.counts, vec![3]);
    }

    #[test]
    fn chi_square_detects_shift() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = crate::sampler::chain_rng(5, 0);
        use rand_distr::{Distribution, StandardNormal};
        let x: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let q = |p| normal.inverse_cdf(p);
        let ok = chi_square_gof(&x, q, 40).unwrap();
        assert!(ok.p_value > 0.001, "{ok:?}");
        assert_eq!(ok.observed.iter().sum::<u64>(), 20_000);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!(chi_square_gof(&shifted, q, 40).unwrap().p_value < 1e-6);
    }
}
