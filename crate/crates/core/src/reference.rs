//! Reference draws and moments used to score samplers.
//!
//! A reference set holds `M x D` draws together with the mean and standard
//! deviation (sample, `M - 1` denominator) of `theta_d` and `theta_d^2`.
//! Analytic references are exact iid draws; long-run references are thinned
//! DR-G-HMC chains that pass a split R-hat check.
//!
//! On disk a reference is a directory with `draws.csv` (header
//! `theta_1..theta_D`, one row per draw) and `moments.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{effective_sample_size, split_rhat, thinning_interval};
use crate::model::LogDensity;
use crate::sampler::{
    chain_rng, run_chain_recording, tune_step_size, ChainOutput, DrGhmcConfig, SamplerConfig, TuningOptions,
};
use crate::{Error, MassMatrix, Result};

/// The function whose expectation is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    /// `f(theta) = theta`
    Identity,
    /// `f(theta) = theta^2`
    Square,
}

impl Moment {
    pub const ALL: [Moment; 2] = [Moment::Identity, Moment::Square];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Moment::Identity => x,
            Moment::Square => x * x,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Moment::Identity => "theta",
            Moment::Square => "theta_sq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    LongRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MomentsFile {
    provenance: Provenance,
    count: usize,
    dim: usize,
    theta: Moments,
    theta_sq: Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    dim: usize,
    draws: Vec<f64>,
    theta: Moments,
    theta_sq: Moments,
    pub provenance: Provenance,
}

fn moments_of(dim: usize, draws: &[f64], f: Moment) -> Moments {
    let n = (draws.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in draws.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f.apply(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut ss = vec![0.0; dim];
    for row in draws.chunks_exact(dim) {
        for ((s, &v), m) in ss.iter_mut().zip(row).zip(&mean) {
            *s += (f.apply(v) - m).powi(2);
        }
    }
    let sd = ss.iter().map(|s| (s / (n - 1.0)).sqrt()).collect();
    Moments { mean, sd }
}

impl ReferenceSet {
    /// Builds a reference from row-major draws, computing its moments.
    pub fn from_draws(dim: usize, draws: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if dim == 0 || !draws.len().is_multiple_of(dim) {
            return Err(Error::InvalidData(format!(
                "{} values do not form rows of dimension {dim}",
                draws.len()
            )));
        }
        if draws.len() / dim < 2 {
            return Err(Error::Empty("reference needs at least two draws"));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite reference draw".into()));
        }
        let theta = moments_of(dim, &draws, Moment::Identity);
        let theta_sq = moments_of(dim, &draws, Moment::Square);
        for m in [&theta, &theta_sq] {
            if let Some(d) = m.sd.iter().position(|&s| !(s > 0.0)) {
                return Err(Error::ZeroReferenceSd(d));
            }
        }
        Ok(Self { dim, draws, theta, theta_sq, provenance })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.draws.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dim..(i + 1) * self.dim]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.chunks_exact(self.dim)
    }

    pub fn moments(&self, f: Moment) -> &Moments {
        match f {
            Moment::Identity => &self.theta,
            Moment::Square => &self.theta_sq,
        }
    }

    /// Writes `draws.csv` and `moments.json` into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let draws_path = dir.join("draws.csv");
        let mut text = String::with_capacity(self.draws.len() * 20);
        let header: Vec<String> = (1..=self.dim).map(|d| format!("theta_{d}")).collect();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in self.draws() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        write_atomic(&draws_path, text.as_bytes())?;
        let file = MomentsFile {
            provenance: self.provenance,
            count: self.len(),
            dim: self.dim,
            theta: self.theta.clone(),
            theta_sq: self.theta_sq.clone(),
        };
        let json = serde_json::to_string_pretty(&file)? + "\n";
        write_atomic(&dir.join("moments.json"), json.as_bytes())
    }

    /// Reads a reference written by [`ReferenceSet::write`]; moments are
    /// recomputed from the draws.
    pub fn load(dir: &Path) -> Result<Self> {
        let moments_path = dir.join("moments.json");
        let text = fs::read_to_string(&moments_path).map_err(|e| Error::io(&moments_path, e))?;
        let meta: MomentsFile = serde_json::from_str(&text)?;
        let draws_path = dir.join("draws.csv");
        let mut reader = csv::Reader::from_path(&draws_path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&draws_path, io),
            other => Error::InvalidData(format!("{other:?}")),
        })?;
        let dim = reader.headers()?.len();
        if dim != meta.dim {
            return Err(Error::DimensionMismatch { expected: meta.dim, actual: dim });
        }
        let mut draws = Vec::with_capacity(meta.count * dim);
        for record in reader.records() {
            for cell in record?.iter() {
                draws.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::InvalidData(format!("bad number {cell:?}")))?,
                );
            }
        }
        Self::from_draws(dim, draws, meta.provenance)
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or(Path::new("."));
    let tmp: PathBuf = parent.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Exact draws from Neal's funnel: `x ~ N(0, 3)`, `y_i | x ~ N(0, exp(x / 2))`.
/// Coordinate 0 is `x`.
pub fn funnel_reference<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Result<ReferenceSet> {
    if dim < 2 {
        return Err(Error::InvalidConfig(format!("funnel needs dimension >= 2, got {dim}")));
    }
    let mut draws = Vec::with_capacity(dim * count);
    for _ in 0..count {
        let x: f64 = 3.0 * rng.sample::<f64, _>(StandardNormal);
        draws.push(x);
        let scale = (0.5 * x).exp();
        for _ in 1..dim {
            draws.push(scale * rng.sample::<f64, _>(StandardNormal));
        }
    }
    ReferenceSet::from_draws(dim, draws, Provenance::Analytic)
}

/// `Sigma_ij = rho^|i - j|` as a dense matrix.
pub fn ar1_covariance(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Exact draws from `N(0, Sigma)` with `Sigma_ij = rho^|i-j|`, via the
/// Cholesky factor of `Sigma`.
pub fn gaussian_reference<R: Rng + ?Sized>(
    dim: usize,
    rho: f64,
    count: usize,
    rng: &mut R,
) -> Result<ReferenceSet> {
    if dim == 0 || !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("invalid Gaussian dim={dim} rho={rho}")));
    }
    let chol = ar1_covariance(dim, rho).cholesky().ok_or(Error::Factorization)?;
    let l = chol.l();
    let mut draws = Vec::with_capacity(dim * count);
    let mut xi = DVector::zeros(dim);
    for _ in 0..count {
        xi.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        draws.extend((&l * &xi).iter());
    }
    ReferenceSet::from_draws(dim, draws, Provenance::Analytic)
}

/// Upper bound on stored draws per long-run chain.
const MAX_RECORDED: u64 = 100_000;

/// Settings of a long-run reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunOptions {
    /// Minimum number of retained (thinned) draws.
    pub draws: usize,
    pub chains: usize,
    pub seed: u64,
    pub max_proposals: usize,
    pub reduction: f64,
    pub damping: f64,
    /// Step size; tuned by a one-step G-HMC pilot when absent.
    pub step_size: Option<f64>,
    /// Gradient budget per chain in the first round.
    pub initial_budget: u64,
    /// Leading fraction of each chain discarded as warm-up.
    pub warmup_fraction: f64,
    /// Budget growth rounds before giving up.
    pub max_rounds: usize,
    pub max_rhat: f64,
}

impl Default for LongRunOptions {
    fn default() -> Self {
        Self {
            draws: 10_000,
            chains: 4,
            seed: 0,
            max_proposals: 5,
            reduction: 4.0,
            damping: 0.08,
            step_size: None,
            initial_budget: 500_000,
            warmup_fraction: 0.2,
            max_rounds: 4,
            max_rhat: 1.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRunReport {
    pub step_size: f64,
    pub pilot_grad_evals: u64,
    pub budget_per_chain: u64,
    pub grad_evals: u64,
    pub rounds: usize,
    /// Iterations between retained draws.
    pub thinning: usize,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    pub retained: usize,
}

#[derive(Debug, Clone)]
pub struct LongRunReference {
    pub set: ReferenceSet,
    pub report: LongRunReport,
    /// Whether the result was read from the cache.
    pub cached: bool,
}

/// Content key of a long-run reference: SHA-256 over the label, dimension
/// and options.
pub fn cache_key(label: &str, dim: usize, opts: &LongRunOptions) -> String {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(b"\0");
    h.update(dim.to_le_bytes());
    h.update(serde_json::to_vec(opts).expect("options serialize"));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn initial_point(dim: usize, seed: u64, chain: u64) -> Vec<f64> {
    let mut rng = chain_rng(seed ^ 0x5eed_1417, chain);
    let u = Uniform::new(-0.5, 0.5).expect("valid range");
    (0..dim).map(|_| u.sample(&mut rng)).collect()
}

/// Long-run DR-G-HMC reference for `model`.
///
/// `label` identifies the model and its data for caching. With `cache` set,
/// a result stored under `cache/<key>` is returned without sampling, and
/// fresh results are stored there.
pub fn longrun_reference<M: LogDensity + ?Sized>(
    model: &M,
    label: &str,
    opts: &LongRunOptions,
    cache: Option<&Path>,
) -> Result<LongRunReference> {
    let dim = model.dim();
    let cache_dir = cache.map(|c| c.join(cache_key(label, dim, opts)));
    if let Some(dir) = &cache_dir {
        let report_path = dir.join("report.json");
        if report_path.exists() {
            let text = fs::read_to_string(&report_path).map_err(|e| Error::io(&report_path, e))?;
            let report: LongRunReport = serde_json::from_str(&text)?;
            let set = ReferenceSet::load(dir)?;
            return Ok(LongRunReference { set, report, cached: true });
        }
    }
    if opts.chains < 2 || opts.draws < 2 || !(0.0..1.0).contains(&opts.warmup_fraction) {
        return Err(Error::InvalidConfig("invalid long-run options".into()));
    }

    let (step_size, pilot_grad_evals) = match opts.step_size {
        Some(eps) => (eps, 0),
        None => {
            let tuning = TuningOptions { seed: opts.seed, damping: opts.damping, ..TuningOptions::default() };
            let t = tune_step_size(model, &initial_point(dim, opts.seed, 0), &MassMatrix::identity(dim), &tuning)?;
            (t.step_size, t.grad_evals)
        }
    };
    let config = SamplerConfig::DrGhmc(DrGhmcConfig {
        max_proposals: opts.max_proposals,
        damping: opts.damping,
        step_size,
        reduction: opts.reduction,
        steps: 1,
        mass: MassMatrix::identity(dim),
        seed: opts.seed,
    });

    let mut budget = opts.initial_budget;
    let mut grad_evals = 0;
    for round in 1..=opts.max_rounds {
        // every iteration costs at least two gradients
        let record_every = (budget / 2).div_ceil(MAX_RECORDED).max(1);
        let chains: Vec<ChainOutput> = (0..opts.chains as u64)
            .into_par_iter()
            .map(|c| {
                let init = initial_point(dim, opts.seed, c);
                run_chain_recording(model, &config, &init, budget, c, record_every)
            })
            .collect::<Result<_>>()?;
        grad_evals += chains.iter().map(|c| c.stats.grad_evals).sum::<u64>();
        let n = chains.iter().map(ChainOutput::len).min().unwrap_or(0);
        let start = (n as f64 * opts.warmup_fraction).ceil() as usize;
        let columns: Vec<Vec<Vec<f64>>> = (0..dim)
            .map(|d| chains.iter().map(|c| c.column(d)[start..n].to_vec()).collect())
            .collect();

        let mut rhat = Vec::with_capacity(dim);
        let mut ess = Vec::with_capacity(dim);
        for per_chain in &columns {
            let refs: Vec<&[f64]> = per_chain.iter().map(Vec::as_slice).collect();
            rhat.push(split_rhat(&refs)?);
            ess.push(effective_sample_size(&refs)?);
        }
        let kept = n - start;
        let total = (kept * opts.chains) as f64;
        let tau = ess.iter().map(|e| total / e).fold(1.0, f64::max);
        let thinning = thinning_interval(tau);
        let retained = opts.chains * kept.div_ceil(thinning.max(1));
        let max_rhat = rhat.iter().copied().fold(0.0, f64::max);

        if max_rhat <= opts.max_rhat && retained >= opts.draws {
            let mut draws = Vec::with_capacity(retained * dim);
            for c in &chains {
                for i in (start..n).step_by(thinning) {
                    draws.extend_from_slice(c.draw(i));
                }
            }
            let set = ReferenceSet::from_draws(dim, draws, Provenance::LongRun)?;
            let report = LongRunReport {
                step_size,
                pilot_grad_evals,
                budget_per_chain: budget,
                grad_evals,
                rounds: round,
                thinning: thinning * record_every as usize,
                rhat,
                ess,
                retained: set.len(),
            };
            if let Some(dir) = &cache_dir {
                set.write(dir)?;
                let json = serde_json::to_string_pretty(&report)? + "\n";
                write_atomic(&dir.join("report.json"), json.as_bytes())?;
            }
            return Ok(LongRunReference { set, report, cached: false });
        }
        if round == opts.max_rounds {
            if max_rhat > opts.max_rhat {
                let worst = rhat.iter().position(|&r| r == max_rhat).unwrap_or(0);
                return Err(Error::NotConverged { max_rhat, dim: worst, rhat });
            }
            return Err(Error::InvalidConfig(format!(
                "long run kept only {retained} of {} requested draws",
                opts.draws
            )));
        }
        let shortfall = (1.5 * opts.draws as f64 / retained.max(1) as f64).ceil() as u64;
        budget = budget.saturating_mul(shortfall.clamp(2, 64));
    }
    unreachable!("loop returns on its last round")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CorrelatedGaussian, Funnel};
    use crate::sampler::chain_rng;

    #[test]
    fn funnel_moments_match_generative_model() {
        let mut rng = chain_rng(1, 0);
        let r = funnel_reference(3, 200_000, &mut rng).unwrap();
        let th = r.moments(Moment::Identity);
        assert!(th.mean[0].abs() < 0.03);
        assert!((th.sd[0] - 3.0).abs() < 0.03);
        // E[y^2] = E[exp(x)] = exp(9/2); heavy tails, so only a loose check
        let sq = r.moments(Moment::Square);
        let e = 4.5f64.exp();
        assert!((sq.mean[1] - e).abs() / e < 0.3, "{}", sq.mean[1]);
    }

    #[test]
    fn gaussian_reference_recovers_covariance() {
        let mut rng = chain_rng(2, 0);
        let r = gaussian_reference(2, 0.5, 100_000, &mut rng).unwrap();
        let n = r.len() as f64;
        let cov01 = r.draws().map(|d| d[0] * d[1]).sum::<f64>() / n;
        assert!((cov01 - 0.5).abs() < 0.02);
        let m = r.moments(Moment::Identity);
        assert!((m.sd[0] - 1.0).abs() < 0.01 && (m.sd[1] - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_rho_gives_iid_draws() {
        let mut rng = chain_rng(3, 0);
        let r = gaussian_reference(3, 0.0, 50_000, &mut rng).unwrap();
        let n = r.len() as f64;
        let c = r.draws().map(|d| d[0] * d[2]).sum::<f64>() / n;
        assert!(c.abs() < 0.03);
    }

    #[test]
    fn constant_dimension_is_rejected() {
        let draws = vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0];
        assert!(matches!(
            ReferenceSet::from_draws(2, draws, Provenance::Analytic),
            Err(Error::ZeroReferenceSd(1))
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = chain_rng(4, 0);
        let r = funnel_reference(3, 100, &mut rng).unwrap();
        r.write(dir.path()).unwrap();
        let back = ReferenceSet::load(dir.path()).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn cache_key_depends_on_inputs() {
        let o = LongRunOptions::default();
        let k = cache_key("m", 3, &o);
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("m", 4, &o));
        assert_ne!(k, cache_key("m", 3, &LongRunOptions { seed: 1, ..o.clone() }));
        assert_eq!(k, cache_key("m", 3, &o));
    }

    #[test]
    fn longrun_gaussian_is_cached() {
        let m = CorrelatedGaussian::new(2, 0.5).unwrap();
        let opts = LongRunOptions {
            draws: 2_000,
            initial_budget: 60_000,
            step_size: Some(0.6),
            ..LongRunOptions::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let a = longrun_reference(&m, "g", &opts, Some(dir.path())).unwrap();
        assert!(!a.cached);
        assert!(a.set.len() >= 2_000);
        let sd = &a.set.moments(Moment::Identity).sd;
        assert!((sd[0] - 1.0).abs() < 0.1, "{sd:?}");
        let b = longrun_reference(&m, "g", &opts, Some(dir.path())).unwrap();
        assert!(b.cached);
        assert_eq!(a.set, b.set);
    }

    #[test]
    fn unconverged_run_is_refused() {
        let m = Funnel::new(10).unwrap();
        let opts = LongRunOptions {
            draws: 100,
            initial_budget: 200,
            step_size: Some(0.1),
            max_rounds: 1,
            ..LongRunOptions::default()
        };
        assert!(matches!(
            longrun_reference(&m, "f", &opts, None),
            Err(Error::NotConverged { .. })
        ));
    }
}
