//! Standardized error of sampler expectations against a reference.
//!
//! For draws `theta^(1..n)`, reference draws and `f` in `{theta, theta^2}`:
//!
//! ```text
//! L_f = max_d |mean_i f(theta_d^(i)) - mean_ref f(theta_d)| / sd_ref f(theta_d)
//! ```

use serde::Serialize;

use crate::reference::{Moment, ReferenceSet};
use crate::sampler::ChainOutput;
use crate::{Error, Result};

fn check_reference(reference: &ReferenceSet, f: Moment) -> Result<()> {
    if let Some(d) = reference.moments(f).sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroReferenceSd(d));
    }
    Ok(())
}

fn errors_from_sums(sums: &[f64], count: usize, reference: &ReferenceSet, f: Moment) -> Vec<f64> {
    let m = reference.moments(f);
    sums.iter()
        .zip(m.mean.iter().zip(&m.sd))
        .map(|(s, (mu, sd))| (s / count as f64 - mu).abs() / sd)
        .collect()
}

/// Per-dimension standardized errors.
pub fn per_dimension_errors<'a, I>(draws: I, reference: &ReferenceSet, f: Moment) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    check_reference(reference, f)?;
    let dim = reference.dim();
    let mut sums = vec![0.0; dim];
    let mut count = 0;
    for row in draws {
        if row.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
        }
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += f.apply(v);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("draws"));
    }
    Ok(errors_from_sums(&sums, count, reference, f))
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

/// Worst-dimension standardized error `L_f`.
pub fn standardized_error<'a, I>(draws: I, reference: &ReferenceSet, f: Moment) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    Ok(argmax(&per_dimension_errors(draws, reference, f)?).1)
}

/// Log-spaced gradient budgets from `min(1000, total)` to `total`, rounded
/// to integers.
pub fn budget_grid(total: u64, points: usize) -> Vec<u64> {
    let start = 1_000u64.min(total).max(1);
    if points <= 1 || total <= start {
        return vec![total];
    }
    let (a, b) = ((start as f64).ln(), (total as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    grid[0] = start;
    grid[points - 1] = total;
    grid
}

/// Errors of one chain along a budget grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub chain_id: usize,
    pub grid: Vec<u64>,
    /// Draws with cumulative gradient count `<= grid[i]`.
    pub draws_used: Vec<usize>,
    pub theta: Vec<f64>,
    pub theta_sq: Vec<f64>,
    pub per_dim_theta: Vec<Vec<f64>>,
    pub per_dim_theta_sq: Vec<Vec<f64>>,
    pub worst_theta: Vec<usize>,
    pub worst_theta_sq: Vec<usize>,
}

impl ErrorReport {
    pub fn values(&self, f: Moment) -> &[f64] {
        match f {
            Moment::Identity => &self.theta,
            Moment::Square => &self.theta_sq,
        }
    }

    /// Error at the last grid point.
    pub fn last(&self, f: Moment) -> f64 {
        *self.values(f).last().expect("non-empty grid")
    }
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Empty("budget grid"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("budget grid must be non-decreasing".into()));
    }
    Ok(())
}

/// Evaluates the standardized errors cumulatively at each grid budget,
/// using every draw whose cumulative gradient count is within the budget.
pub fn error_curve(
    chain: &ChainOutput,
    chain_id: usize,
    reference: &ReferenceSet,
    grid: &[u64],
) -> Result<ErrorReport> {
    check_grid(grid)?;
    for f in Moment::ALL {
        check_reference(reference, f)?;
    }
    let dim = reference.dim();
    if chain.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: chain.dim });
    }
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut used = 0;
    let mut report = ErrorReport {
        chain_id,
        grid: grid.to_vec(),
        draws_used: Vec::with_capacity(grid.len()),
        theta: Vec::with_capacity(grid.len()),
        theta_sq: Vec::with_capacity(grid.len()),
        per_dim_theta: Vec::with_capacity(grid.len()),
        per_dim_theta_sq: Vec::with_capacity(grid.len()),
        worst_theta: Vec::with_capacity(grid.len()),
        worst_theta_sq: Vec::with_capacity(grid.len()),
    };
    for &t in grid {
        while used < chain.len() && chain.meta[used].cum_grads <= t {
            for ((s, q), &v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(chain.draw(used)) {
                *s += v;
                *q += v * v;
            }
            used += 1;
        }
        if used == 0 {
            return Err(Error::Empty("draws within budget"));
        }
        let e1 = errors_from_sums(&sum, used, reference, Moment::Identity);
        let e2 = errors_from_sums(&sum_sq, used, reference, Moment::Square);
        let (w1, v1) = argmax(&e1);
        let (w2, v2) = argmax(&e2);
        report.draws_used.push(used);
        report.theta.push(v1);
        report.theta_sq.push(v2);
        report.worst_theta.push(w1);
        report.worst_theta_sq.push(w2);
        report.per_dim_theta.push(e1);
        report.per_dim_theta_sq.push(e2);
    }
    Ok(report)
}

/// How per-chain results are combined into one curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over chains of each chain's error.
    #[default]
    MeanOfErrors,
    /// Error of the draws pooled across chains.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageCurve {
    pub aggregation: Aggregation,
    pub grid: Vec<u64>,
    pub theta: Vec<f64>,
    pub theta_sq: Vec<f64>,
}

impl AverageCurve {
    pub fn values(&self, f: Moment) -> &[f64] {
        match f {
            Moment::Identity => &self.theta,
            Moment::Square => &self.theta_sq,
        }
    }
}

/// Mean of per-chain error curves sharing one grid.
pub fn mean_of_errors(reports: &[ErrorReport]) -> Result<AverageCurve> {
    let first = reports.first().ok_or(Error::Empty("error reports"))?;
    if reports.iter().any(|r| r.grid != first.grid) {
        return Err(Error::InvalidData("error reports use different grids".into()));
    }
    let n = reports.len() as f64;
    let avg = |f: Moment| -> Vec<f64> {
        (0..first.grid.len())
            .map(|i| reports.iter().map(|r| r.values(f)[i]).sum::<f64>() / n)
            .collect()
    };
    Ok(AverageCurve {
        aggregation: Aggregation::MeanOfErrors,
        grid: first.grid.clone(),
        theta: avg(Moment::Identity),
        theta_sq: avg(Moment::Square),
    })
}

/// Error of pooled draws: at each budget, the draws of all chains within
/// that budget are combined before taking means.
pub fn pooled_error_curve(
    chains: &[ChainOutput],
    reference: &ReferenceSet,
    grid: &[u64],
) -> Result<AverageCurve> {
    check_grid(grid)?;
    if chains.is_empty() {
        return Err(Error::Empty("chains"));
    }
    let mut theta = Vec::with_capacity(grid.len());
    let mut theta_sq = Vec::with_capacity(grid.len());
    for &t in grid {
        let rows = || chains.iter().flat_map(|c| c.draws().take(c.len_within(t)));
        theta.push(standardized_error(rows(), reference, Moment::Identity)?);
        theta_sq.push(standardized_error(rows(), reference, Moment::Square)?);
    }
    Ok(AverageCurve { aggregation: Aggregation::Pooled, grid: grid.to_vec(), theta, theta_sq })
}

/// Combined curve under the chosen aggregation.
pub fn aggregate_curve(
    chains: &[ChainOutput],
    reference: &ReferenceSet,
    grid: &[u64],
    aggregation: Aggregation,
) -> Result<AverageCurve> {
    match aggregation {
        Aggregation::Pooled => pooled_error_curve(chains, reference, grid),
        Aggregation::MeanOfErrors => {
            let reports: Vec<ErrorReport> = chains
                .iter()
                .enumerate()
                .map(|(i, c)| error_curve(c, i, reference, grid))
                .collect::<Result<_>>()?;
            mean_of_errors(&reports)
        }
    }
}
