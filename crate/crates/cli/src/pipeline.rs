//! The steps shared by the subcommands: build a model, tune, sample,
//! produce references and score runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use drghmc::diagnostics::{
    box_summary, budget_grid, error_curve, mean_of_errors, pooled_error_curve, Aggregation,
    AverageCurve, BoxSummary, ErrorReport,
};
use drghmc::model::{build_model, DatasetBundle, ModelOptions, ModelSpec};
use drghmc::reference::{
    funnel_reference, gaussian_reference, longrun_reference, LongRunOptions, LongRunReport, Moment,
    ReferenceSet,
};
use drghmc::sampler::{
    chain_rng, diagonal_mass_from_pilot, run_chain, tune_step_size, ChainOutput, DrGhmcConfig,
    DrHmcConfig, HmcConfig, SamplerConfig, SamplerKind, TuningOptions,
};
use drghmc::{LogDensity, MassMatrix};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, MassPolicy};
use crate::error::{CliError, CliResult};
use crate::io::{chain_csv, chain_file_name, fmt_f64, table, ChainRecord, Manifest, Staging};

/// Root for default output locations, from `DRGHMC_OUT` or `./runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os("DRGHMC_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

const INIT_SALT: u64 = 0x1a17_0000_0000_0001;

pub struct BuiltModel {
    pub spec: ModelSpec,
    /// Identifies model and data for reference caching.
    pub label: String,
    pub rho: Option<f64>,
}

pub fn build(cfg: &ExperimentConfig) -> CliResult<BuiltModel> {
    let data = match &cfg.data {
        Some(path) => Some(DatasetBundle::load(&cfg.model, path)?),
        None if cfg.model == "gaussian" && cfg.rho > 0.0 => Some(DatasetBundle::Normal { rho: cfg.rho }),
        None => None,
    };
    let spec = build_model(&cfg.model, ModelOptions { dimension: cfg.dimension, data: data.clone() })?;
    let data_json = match data.or(DatasetBundle::bundled(&cfg.model)?) {
        Some(d) => d.to_json()?,
        None => String::new(),
    };
    let rho = match cfg.model.as_str() {
        "gaussian" => Some(cfg.rho),
        "normal100" => match DatasetBundle::from_json("normal100", &data_json)? {
            DatasetBundle::Normal { rho } => Some(rho),
            _ => None,
        },
        _ => None,
    };
    let label = format!("{}:{}:{}", cfg.model, spec.dim(), data_json);
    Ok(BuiltModel { spec, label, rho })
}

/// Starting point of chain `chain`: a reference draw when a reference is
/// given, otherwise the origin plus uniform noise on `[-0.5, 0.5]`.
pub fn initial_point(dim: usize, seed: u64, chain: u64, reference: Option<&ReferenceSet>) -> Vec<f64> {
    let mut rng = chain_rng(seed ^ INIT_SALT, chain);
    match reference {
        Some(r) => r.draw(rng.random_range(0..r.len())).to_vec(),
        None => (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
    }
}

pub struct Tuned {
    pub config: SamplerConfig,
    pub step_size_ref: Option<f64>,
    pub step_size: f64,
    pub steps: usize,
    pub trajectory_length: Option<f64>,
    pub pilot_grad_evals: u64,
}

pub fn tune(model: &ModelSpec, cfg: &ExperimentConfig, init: &[f64]) -> CliResult<Tuned> {
    let dim = model.dim();
    let opts = TuningOptions {
        seed: cfg.seed,
        damping: cfg.damping,
        pilot_iterations: cfg.pilot_iterations,
        ..TuningOptions::default()
    };
    let mut pilot_grad_evals = 0;
    let mut mass = MassMatrix::identity(dim);
    let mut step_size_ref = None;
    if cfg.mass == MassPolicy::Diagonal {
        let eps = match cfg.step_size {
            Some(e) => e,
            None => {
                let t = tune_step_size(model, init, &mass, &opts)?;
                pilot_grad_evals += t.grad_evals;
                t.step_size
            }
        };
        let (m, g) = diagonal_mass_from_pilot(model, init, eps, cfg.pilot_budget, cfg.seed)?;
        pilot_grad_evals += g;
        mass = m;
    }
    let step_size = match cfg.step_size {
        Some(e) => e,
        None => {
            let t = tune_step_size(model, init, &mass, &opts)?;
            pilot_grad_evals += t.grad_evals;
            step_size_ref = Some(t.step_size);
            cfg.step_size_factor * t.step_size
        }
    };
    let steps = cfg.initial_steps();
    let mut trajectory_length = None;
    let config = match cfg.sampler {
        SamplerKind::DrGhmc | SamplerKind::Ghmc => {
            let c = DrGhmcConfig {
                max_proposals: cfg.max_proposals,
                damping: cfg.damping,
                step_size,
                reduction: cfg.reduction,
                steps,
                mass,
                seed: cfg.seed,
            };
            if cfg.sampler == SamplerKind::Ghmc {
                SamplerConfig::Ghmc(DrGhmcConfig { max_proposals: 1, ..c })
            } else {
                SamplerConfig::DrGhmc(c)
            }
        }
        SamplerKind::DrHmc => {
            let tau = cfg.trajectory_length.unwrap_or(step_size * steps as f64);
            trajectory_length = Some(tau);
            SamplerConfig::DrHmc(DrHmcConfig {
                max_proposals: cfg.max_proposals,
                step_size,
                reduction: cfg.reduction,
                trajectory_length: tau,
                mass,
                seed: cfg.seed,
            })
        }
        SamplerKind::Hmc => SamplerConfig::Hmc(HmcConfig { step_size, steps, mass, seed: cfg.seed }),
    };
    config.validate()?;
    Ok(Tuned { config, step_size_ref, step_size, steps, trajectory_length, pilot_grad_evals })
}

fn pool(cfg: &ExperimentConfig) -> CliResult<rayon::ThreadPool> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = cfg.workers.unwrap_or(cores).min(cfg.chains).max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

pub struct SampleRun {
    pub manifest: Manifest,
    pub chains: Vec<ChainOutput>,
}

/// Tunes and runs every chain of `cfg`. Chains start from `reference` draws
/// when given.
pub fn sample(
    cfg: &ExperimentConfig,
    reference: Option<&ReferenceSet>,
    record_timing: bool,
) -> CliResult<SampleRun> {
    cfg.validate()?;
    let started = Instant::now();
    let built = build(cfg)?;
    let model = &built.spec;
    let dim = model.dim();
    if let Some(r) = reference {
        if r.dim() != dim {
            return Err(drghmc::Error::DimensionMismatch { expected: dim, actual: r.dim() }.into());
        }
    }
    let inits: Vec<Vec<f64>> =
        (0..cfg.chains as u64).map(|c| initial_point(dim, cfg.seed, c, reference)).collect();
    let tuned = tune(model, cfg, &inits[0])?;
    let chains: Vec<ChainOutput> = pool(cfg)?.install(|| {
        inits
            .par_iter()
            .enumerate()
            .map(|(c, init)| run_chain(model, &tuned.config, init, cfg.budget, c as u64))
            .collect::<drghmc::Result<_>>()
    })?;

    let records: Vec<ChainRecord> = chains
        .iter()
        .enumerate()
        .map(|(c, out)| ChainRecord {
            chain: c,
            file: chain_file_name(c),
            stream: c as u64,
            initial_point: inits[c].clone(),
            iterations: out.stats.iterations,
            grad_evals: out.stats.grad_evals,
            divergences: out.stats.divergences,
            guard_hits: out.stats.guard_hits,
            accepted_by_stage: out.stats.accepted_by_stage.clone(),
        })
        .collect();
    let config: BTreeMap<String, String> =
        cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let manifest = Manifest {
        model: cfg.model.clone(),
        dim,
        param_names: model.param_names(),
        sampler: cfg.sampler.to_string(),
        config,
        seed: cfg.seed,
        budget: cfg.budget,
        step_size_ref: tuned.step_size_ref,
        step_size: tuned.step_size,
        steps: tuned.steps,
        trajectory_length: tuned.trajectory_length,
        mass_diagonal: tuned.config.mass().diag().to_vec(),
        pilot_grad_evals: tuned.pilot_grad_evals,
        total_grad_evals: records.iter().map(|r| r.grad_evals).sum(),
        total_divergences: records.iter().map(|r| r.divergences).sum(),
        total_guard_hits: records.iter().map(|r| r.guard_hits).sum(),
        chains: records,
        wall_time_seconds: record_timing.then(|| started.elapsed().as_secs_f64()),
    };
    Ok(SampleRun { manifest, chains })
}

/// Stages a run's files under `rel` (empty for the staging root).
pub fn stage_run(staging: &Staging, rel: &Path, run: &SampleRun, cfg: &ExperimentConfig) -> CliResult<()> {
    for (c, chain) in run.chains.iter().enumerate() {
        staging.write(rel.join(chain_file_name(c)), chain_csv(chain).as_bytes())?;
    }
    let json = serde_json::to_string_pretty(&run.manifest)? + "\n";
    staging.write(rel.join("manifest.json"), json.as_bytes())?;
    staging.write(rel.join("config.txt"), cfg.to_file_text().as_bytes())?;
    Ok(())
}

/// Default reference size: analytic references are cheap, long runs less so.
pub fn default_reference_draws(model: &str) -> usize {
    match model {
        "funnel" | "gaussian" | "normal100" => 100_000,
        _ => 10_000,
    }
}

pub struct MadeReference {
    pub set: ReferenceSet,
    pub long_run: Option<LongRunReport>,
    pub cached: bool,
}

/// Analytic reference for the funnel and Gaussians, cached long run otherwise.
pub fn make_reference(
    cfg: &ExperimentConfig,
    draws: usize,
    cache: Option<&Path>,
) -> CliResult<MadeReference> {
    let built = build(cfg)?;
    let dim = built.spec.dim();
    let mut rng = chain_rng(cfg.seed, 0);
    match cfg.model.as_str() {
        "funnel" => Ok(MadeReference {
            set: funnel_reference(dim, draws, &mut rng)?,
            long_run: None,
            cached: false,
        }),
        "gaussian" | "normal100" => Ok(MadeReference {
            set: gaussian_reference(dim, built.rho.unwrap_or(0.0), draws, &mut rng)?,
            long_run: None,
            cached: false,
        }),
        _ => {
            let opts = LongRunOptions { draws, seed: cfg.seed, ..LongRunOptions::default() };
            let r = longrun_reference(&built.spec, &built.label, &opts, cache)?;
            Ok(MadeReference { set: r.set, long_run: Some(r.report), cached: r.cached })
        }
    }
}

pub struct Metrics {
    pub reports: Vec<ErrorReport>,
    pub curve: AverageCurve,
    pub summary_theta: BoxSummary,
    pub summary_theta_sq: BoxSummary,
}

pub fn compute_metrics(
    chains: &[ChainOutput],
    reference: &ReferenceSet,
    budget: u64,
    grid_points: usize,
    aggregation: Aggregation,
) -> CliResult<Metrics> {
    if let Some(c) = chains.iter().find(|c| c.dim != reference.dim()) {
        return Err(drghmc::Error::DimensionMismatch { expected: reference.dim(), actual: c.dim }.into());
    }
    let grid = budget_grid(budget, grid_points);
    let reports: Vec<ErrorReport> = chains
        .par_iter()
        .enumerate()
        .map(|(i, c)| error_curve(c, i, reference, &grid))
        .collect::<drghmc::Result<_>>()?;
    let curve = match aggregation {
        Aggregation::MeanOfErrors => mean_of_errors(&reports)?,
        Aggregation::Pooled => pooled_error_curve(chains, reference, &grid)?,
    };
    let finals = |f: Moment| reports.iter().map(|r| r.last(f)).collect::<Vec<_>>();
    Ok(Metrics {
        summary_theta: box_summary(&finals(Moment::Identity))?,
        summary_theta_sq: box_summary(&finals(Moment::Square))?,
        reports,
        curve,
    })
}

pub const SUMMARY_HEADER: [&str; 9] =
    ["metric", "count", "mean", "median", "q25", "q75", "whisker_low", "whisker_high", "outliers"];

pub fn summary_row(metric: &str, s: &BoxSummary) -> Vec<String> {
    vec![
        metric.to_string(),
        s.count.to_string(),
        fmt_f64(s.mean),
        fmt_f64(s.median),
        fmt_f64(s.q25),
        fmt_f64(s.q75),
        fmt_f64(s.whisker_low),
        fmt_f64(s.whisker_high),
        s.outliers.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"),
    ]
}

pub fn stage_metrics(staging: &Staging, rel: &Path, m: &Metrics) -> CliResult<()> {
    let errors = table(
        &["chain", "L_theta", "L_theta_sq", "worst_theta", "worst_theta_sq"],
        m.reports.iter().map(|r| {
            let last = r.grid.len() - 1;
            vec![
                r.chain_id.to_string(),
                fmt_f64(r.theta[last]),
                fmt_f64(r.theta_sq[last]),
                (r.worst_theta[last] + 1).to_string(),
                (r.worst_theta_sq[last] + 1).to_string(),
            ]
        }),
    );
    staging.write(rel.join("errors.csv"), errors.as_bytes())?;
    let curves = table(
        &["chain", "grad_budget", "draws", "L_theta", "L_theta_sq"],
        m.reports.iter().flat_map(|r| {
            (0..r.grid.len()).map(move |i| {
                vec![
                    r.chain_id.to_string(),
                    r.grid[i].to_string(),
                    r.draws_used[i].to_string(),
                    fmt_f64(r.theta[i]),
                    fmt_f64(r.theta_sq[i]),
                ]
            })
        }),
    );
    staging.write(rel.join("curves.csv"), curves.as_bytes())?;
    let mean = table(
        &["grad_budget", "L_theta", "L_theta_sq"],
        (0..m.curve.grid.len()).map(|i| {
            vec![m.curve.grid[i].to_string(), fmt_f64(m.curve.theta[i]), fmt_f64(m.curve.theta_sq[i])]
        }),
    );
    let name = match m.curve.aggregation {
        Aggregation::MeanOfErrors => "curve_mean.csv",
        Aggregation::Pooled => "curve_pooled.csv",
    };
    staging.write(rel.join(name), mean.as_bytes())?;
    let summary = table(
        &SUMMARY_HEADER,
        [summary_row("L_theta", &m.summary_theta), summary_row("L_theta_sq", &m.summary_theta_sq)],
    );
    staging.write(rel.join("summary.csv"), summary.as_bytes())?;
    Ok(())
}
