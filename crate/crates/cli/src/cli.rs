//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use drghmc::diagnostics::{
    condition_number_field, marginal_histogram, probe_accepted_step_size, Aggregation,
    ProbeOptions,
};
use drghmc::model::Funnel;
use drghmc::reference::ReferenceSet;
use drghmc::sampler::SamplerKind;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::io::{fmt_f64, load_run, table, Staging};
use crate::pipeline::{
    compute_metrics, default_reference_draws, make_reference, output_root, sample, stage_metrics,
    stage_run, summary_row, SUMMARY_HEADER,
};

#[derive(Debug, Parser)]
#[command(name = "drghmc-bench", version, about = "Delayed rejection HMC benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run chains and write draw files plus a manifest.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        /// Record wall-clock time in the manifest (makes reruns differ).
        #[arg(long)]
        record_timing: bool,
    },
    /// Produce reference draws and moments for a model.
    Reference {
        #[command(flatten)]
        run: RunArgs,
        /// Number of reference draws.
        #[arg(long)]
        draws: Option<usize>,
        /// Cache directory for long-run references.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Score a run against a reference.
    Metrics {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
        /// Average the error of pooled draws instead of per-chain errors.
        #[arg(long)]
        pooled: bool,
    },
    /// Repeat sample and metrics over values of one hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// One of gamma, K, r, c.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<String>,
        #[arg(long)]
        reference_draws: Option<usize>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        grid_points: usize,
    },
    /// Emit the table behind a figure: stepsize_map, funnel_hist,
    /// condition_field or error_curves.
    Figure {
        name: String,
        #[command(flatten)]
        run: RunArgs,
        /// Grid points per axis.
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long, default_value = "-6,6", allow_hyphen_values = true)]
        x_range: String,
        #[arg(long, default_value = "-6,6", allow_hyphen_values = true)]
        y_range: String,
        /// Trials per grid point for stepsize_map.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 60)]
        bins: usize,
        #[arg(long, default_value = "-12,12", allow_hyphen_values = true)]
        hist_range: String,
        /// Existing run to histogram instead of sampling.
        #[arg(long)]
        from_run: Option<PathBuf>,
        /// Samplers compared by error_curves.
        #[arg(long, value_delimiter = ',', default_value = "drghmc,drhmc,ghmc,hmc")]
        samplers: Vec<String>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

/// Config file plus flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub budget: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub max_proposals: Option<usize>,
    #[arg(long)]
    pub reduction: Option<f64>,
    #[arg(long)]
    pub step_size_factor: Option<f64>,
    #[arg(long)]
    pub trajectory_length: Option<f64>,
    /// Any other config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    pub fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--set expects key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        let mut put = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
        put("model", self.model.clone())?;
        put("sampler", self.sampler.clone())?;
        put("seed", self.seed.map(|v| v.to_string()))?;
        put("chains", self.chains.map(|v| v.to_string()))?;
        put("budget", self.budget.clone())?;
        put("workers", self.workers.map(|v| v.to_string()))?;
        put("damping", self.gamma.map(|v| v.to_string()))?;
        put("max_proposals", self.max_proposals.map(|v| v.to_string()))?;
        put("reduction", self.reduction.map(|v| v.to_string()))?;
        put("step_size_factor", self.step_size_factor.map(|v| v.to_string()))?;
        put("trajectory_length", self.trajectory_length.map(|v| v.to_string()))?;
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig, default: impl FnOnce() -> PathBuf) -> PathBuf {
    cfg.out.clone().unwrap_or_else(default)
}

fn cache_dir(cache: &Option<PathBuf>) -> PathBuf {
    cache.clone().unwrap_or_else(|| output_root().join("cache"))
}

fn load_reference(cfg: &ExperimentConfig) -> CliResult<Option<ReferenceSet>> {
    cfg.reference.as_deref().map(ReferenceSet::load).transpose().map_err(Into::into)
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| CliError::usage(format!("expected `low,high`, got `{s}`")))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad number `{v}`")));
    let (lo, hi) = (p(a)?, p(b)?);
    if !(lo <= hi) {
        return Err(CliError::usage(format!("empty range `{s}`")));
    }
    Ok((lo, hi))
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn funnel_for(cfg: &ExperimentConfig) -> CliResult<Funnel> {
    if cfg.model != "funnel" {
        return Err(CliError::usage("this figure is defined for the funnel model only"));
    }
    Ok(Funnel::new(cfg.dimension.unwrap_or(10))?)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample { run, record_timing } => {
            let cfg = run.resolve()?;
            let reference = load_reference(&cfg)?;
            let out = out_dir(&cfg, || {
                output_root().join(format!("{}_{}_seed{}", cfg.model, cfg.sampler, cfg.seed))
            });
            let result = sample(&cfg, reference.as_ref(), record_timing)?;
            let staging = Staging::new(&out)?;
            stage_run(&staging, Path::new(""), &result, &cfg)?;
            staging.commit()?;
            eprintln!(
                "wrote {} chains ({} gradient evaluations) to {}",
                result.chains.len(),
                result.manifest.total_grad_evals,
                out.display()
            );
        }
        Command::Reference { run, draws, cache } => {
            let cfg = run.resolve()?;
            let out = out_dir(&cfg, || output_root().join("reference").join(&cfg.model));
            let draws = draws.unwrap_or_else(|| default_reference_draws(&cfg.model));
            let made = match make_reference(&cfg, draws, Some(&cache_dir(&cache))) {
                Err(CliError::Core(drghmc::Error::NotConverged { max_rhat, dim, rhat })) => {
                    eprintln!("R-hat by dimension:");
                    for (d, r) in rhat.iter().enumerate() {
                        eprintln!("  theta_{}: {r:.4}", d + 1);
                    }
                    return Err(drghmc::Error::NotConverged { max_rhat, dim, rhat }.into());
                }
                other => other?,
            };
            let staging = Staging::new(&out)?;
            made.set.write(&staging_path(&staging))?;
            if let Some(report) = &made.long_run {
                let json = serde_json::to_string_pretty(report)? + "\n";
                staging.write("report.json", json.as_bytes())?;
            }
            staging.commit()?;
            eprintln!(
                "wrote {} reference draws to {}{}",
                made.set.len(),
                out.display(),
                if made.cached { " (cached)" } else { "" }
            );
        }
        Command::Metrics { run, reference, out, grid_points, pooled } => {
            let loaded = load_run(&run)?;
            let reference = ReferenceSet::load(&reference)?;
            let aggregation = if pooled { Aggregation::Pooled } else { Aggregation::MeanOfErrors };
            let metrics =
                compute_metrics(&loaded.chains, &reference, loaded.budget, grid_points, aggregation)?;
            let out = out.unwrap_or_else(|| run.join("metrics"));
            let staging = Staging::new(&out)?;
            stage_metrics(&staging, Path::new(""), &metrics)?;
            staging.commit()?;
            eprintln!(
                "median L_theta {:.4}, median L_theta_sq {:.4}",
                metrics.summary_theta.median, metrics.summary_theta_sq.median
            );
        }
        Command::Sweep { run, param, values, reference_draws, cache, grid_points } => {
            let cfg = run.resolve()?;
            let key = match param.as_str() {
                "gamma" => "damping",
                "K" => "max_proposals",
                "r" => "reduction",
                "c" => "step_size_factor",
                other => return Err(CliError::usage(format!("cannot sweep `{other}`"))),
            };
            let mut per_value = Vec::with_capacity(values.len());
            for v in &values {
                let mut c = cfg.clone();
                c.set(key, v)?;
                c.validate()?;
                per_value.push(c);
            }
            let out = out_dir(&cfg, || output_root().join(format!("sweep_{}_{}", cfg.model, param)));
            let staging = Staging::new(&out)?;
            let reference = match load_reference(&cfg)? {
                Some(r) => r,
                None => {
                    let draws = reference_draws.unwrap_or_else(|| default_reference_draws(&cfg.model));
                    let r = make_reference(&cfg, draws, Some(&cache_dir(&cache)))?.set;
                    r.write(&staging_path(&staging).join("reference"))?;
                    r
                }
            };
            let mut rows = Vec::new();
            for (v, c) in values.iter().zip(&per_value) {
                let result = sample(c, Some(&reference), false)?;
                let rel = PathBuf::from(format!("{param}_{v}"));
                stage_run(&staging, &rel, &result, c)?;
                let m = compute_metrics(
                    &result.chains,
                    &reference,
                    c.budget,
                    grid_points,
                    Aggregation::MeanOfErrors,
                )?;
                stage_metrics(&staging, &rel.join("metrics"), &m)?;
                for (metric, s) in [("L_theta", &m.summary_theta), ("L_theta_sq", &m.summary_theta_sq)] {
                    let mut row = vec![param.clone(), v.clone()];
                    row.extend(summary_row(metric, s));
                    rows.push(row);
                }
            }
            let mut header = vec!["param", "value"];
            header.extend(SUMMARY_HEADER);
            staging.write(format!("sweep_{param}.csv"), table(&header, rows).as_bytes())?;
            staging.commit()?;
            eprintln!("wrote sweep over {} values to {}", values.len(), out.display());
        }
        Command::Figure {
            name,
            run,
            grid,
            x_range,
            y_range,
            trials,
            bins,
            hist_range,
            from_run,
            samplers,
            cache,
        } => {
            let cfg = run.resolve()?;
            let text = match name.as_str() {
                "stepsize_map" => {
                    let funnel = funnel_for(&cfg)?;
                    let xs = linspace(parse_range(&x_range)?, grid);
                    let ys = linspace(parse_range(&y_range)?, grid);
                    let points: Vec<(f64, f64)> =
                        xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
                    let opts = ProbeOptions { trials, seed: cfg.seed, ..ProbeOptions::default() };
                    let rows = probe_accepted_step_size(&funnel, &points, &opts)?;
                    table(
                        &["x", "y", "mean_accepted_eps", "accepted", "rejected"],
                        rows.iter().map(|r| {
                            vec![
                                fmt_f64(r.x),
                                fmt_f64(r.y),
                                fmt_f64(r.mean_accepted_step),
                                r.accepted.to_string(),
                                r.rejected.to_string(),
                            ]
                        }),
                    )
                }
                "condition_field" => {
                    let funnel = funnel_for(&cfg)?;
                    let xs = linspace(parse_range(&x_range)?, grid);
                    let ys = linspace(parse_range(&y_range)?, grid);
                    table(
                        &["x", "y", "neg_log_density", "condition_number"],
                        condition_number_field(&funnel, &xs, &ys).iter().map(|r| {
                            vec![
                                fmt_f64(r.x),
                                fmt_f64(r.y),
                                fmt_f64(r.neg_log_density),
                                fmt_f64(r.condition_number),
                            ]
                        }),
                    )
                }
                "funnel_hist" => {
                    let chains = match &from_run {
                        Some(dir) => load_run(dir)?.chains,
                        None => sample(&cfg, load_reference(&cfg)?.as_ref(), false)?.chains,
                    };
                    let (lo, hi) = parse_range(&hist_range)?;
                    let h = marginal_histogram(&chains, 0, lo, hi, bins)?;
                    let edges = h.edges();
                    let normal = |x: f64| (-x * x / 18.0).exp() / (3.0 * (2.0 * std::f64::consts::PI).sqrt());
                    let mut rows = vec![vec![
                        "-inf".into(),
                        fmt_f64(lo),
                        h.underflow.to_string(),
                        String::new(),
                        String::new(),
                    ]];
                    for i in 0..bins {
                        let mid = 0.5 * (edges[i] + edges[i + 1]);
                        rows.push(vec![
                            fmt_f64(edges[i]),
                            fmt_f64(edges[i + 1]),
                            h.counts[i].to_string(),
                            fmt_f64(h.density(i)),
                            fmt_f64(normal(mid)),
                        ]);
                    }
                    rows.push(vec![fmt_f64(hi), "inf".into(), h.overflow.to_string(), String::new(), String::new()]);
                    table(&["bin_low", "bin_high", "count", "density", "normal_0_3_density"], rows)
                }
                "error_curves" => {
                    let reference = match load_reference(&cfg)? {
                        Some(r) => r,
                        None => {
                            make_reference(&cfg, default_reference_draws(&cfg.model), Some(&cache_dir(&cache)))?.set
                        }
                    };
                    let mut rows = Vec::new();
                    for s in &samplers {
                        let kind: SamplerKind =
                            s.parse().map_err(|e: drghmc::Error| CliError::usage(e.to_string()))?;
                        let mut c = cfg.clone();
                        c.sampler = kind;
                        let result = sample(&c, Some(&reference), false)?;
                        let m = compute_metrics(&result.chains, &reference, c.budget, 50, Aggregation::MeanOfErrors)?;
                        for i in 0..m.curve.grid.len() {
                            rows.push(vec![
                                kind.to_string(),
                                m.curve.grid[i].to_string(),
                                fmt_f64(m.curve.theta[i]),
                                fmt_f64(m.curve.theta_sq[i]),
                            ]);
                        }
                    }
                    table(&["sampler", "grad_budget", "L_theta", "L_theta_sq"], rows)
                }
                other => return Err(CliError::usage(format!("unknown figure `{other}`"))),
            };
            let out = out_dir(&cfg, || output_root().join("figures"));
            let staging = Staging::new(&out)?;
            staging.write(format!("{name}.csv"), text.as_bytes())?;
            staging.commit()?;
            eprintln!("wrote {}", out.join(format!("{name}.csv")).display());
        }
    }
    Ok(())
}

fn staging_path(staging: &Staging) -> PathBuf {
    staging.root().to_path_buf()
}
