//! Output staging and the on-disk run format.
//!
//! A run directory holds `manifest.json` and one `chain_NNN.csv` per chain
//! with header `iter,cum_grads,accepted_stage,accepted_eps,theta_1..theta_D`.
//! Externally produced draws (for example from NUTS) can be scored by
//! `metrics` when written in the same CSV layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use drghmc::sampler::{ChainOutput, IterationMeta};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DRAW_COLUMNS: [&str; 4] = ["iter", "cum_grads", "accepted_stage", "accepted_eps"];

/// Files are written into a temporary sibling directory and moved into
/// place only by [`Staging::commit`], so a failed command leaves no output.
pub struct Staging {
    target: PathBuf,
    tmp: tempfile::TempDir,
}

impl Staging {
    pub fn new(target: &Path) -> CliResult<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let tmp = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Self { target: target.to_path_buf(), tmp })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Directory files are staged in.
    pub fn root(&self) -> &Path {
        self.tmp.path()
    }

    pub fn write(&self, rel: impl AsRef<Path>, bytes: &[u8]) -> CliResult<()> {
        let path = self.tmp.path().join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    /// Moves every staged file to the same relative path under the target.
    pub fn commit(self) -> CliResult<()> {
        fn walk(from: &Path, to: &Path) -> CliResult<()> {
            fs::create_dir_all(to).map_err(|e| CliError::io(to, e))?;
            let mut entries: Vec<_> = fs::read_dir(from)
                .map_err(|e| CliError::io(from, e))?
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::io(from, e))?;
            entries.sort_by_key(|e| e.file_name());
            for entry in entries {
                let src = entry.path();
                let dst = to.join(entry.file_name());
                if src.is_dir() {
                    walk(&src, &dst)?;
                } else {
                    fs::rename(&src, &dst).map_err(|e| CliError::io(&dst, e))?;
                }
            }
            Ok(())
        }
        walk(self.tmp.path(), &self.target)
    }
}

pub fn chain_file_name(chain: usize) -> String {
    format!("chain_{chain:03}.csv")
}

pub fn chain_csv(chain: &ChainOutput) -> String {
    let mut s = String::with_capacity(chain.len() * (chain.dim + 4) * 20);
    s.push_str(&DRAW_COLUMNS.join(","));
    for d in 1..=chain.dim {
        s.push_str(&format!(",theta_{d}"));
    }
    s.push('\n');
    for (m, row) in chain.meta.iter().zip(chain.draws()) {
        s.push_str(&format!(
            "{},{},{},{}",
            m.iter, m.cum_grads, m.accepted_stage, m.accepted_step_size
        ));
        for v in row {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {msg}", path.display()))
}

pub fn read_chain_csv(path: &Path) -> CliResult<ChainOutput> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => bad(path, format!("{other:?}")),
    })?;
    let header = reader.headers()?.clone();
    if header.len() <= DRAW_COLUMNS.len()
        || header.iter().zip(DRAW_COLUMNS).any(|(a, b)| a != b)
    {
        return Err(bad(path, "unexpected draw header"));
    }
    let dim = header.len() - DRAW_COLUMNS.len();
    let mut positions = Vec::new();
    let mut meta = Vec::new();
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(path, format!("bad number `{s}`")));
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad(path, format!("bad integer `{s}`")));
    for record in reader.records() {
        let r = record?;
        meta.push(IterationMeta {
            iter: int(&r[0])?,
            cum_grads: int(&r[1])?,
            accepted_stage: int(&r[2])? as u32,
            accepted_step_size: num(&r[3])?,
        });
        for cell in r.iter().skip(DRAW_COLUMNS.len()) {
            positions.push(num(cell)?);
        }
    }
    if meta.is_empty() {
        return Err(bad(path, "no draws"));
    }
    if meta.windows(2).any(|w| w[1].cum_grads < w[0].cum_grads) {
        return Err(bad(path, "cum_grads must be non-decreasing"));
    }
    Ok(ChainOutput::from_parts(dim, positions, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub file: String,
    /// RNG stream of the chain under the run seed.
    pub stream: u64,
    pub initial_point: Vec<f64>,
    pub iterations: u64,
    pub grad_evals: u64,
    pub divergences: u64,
    pub guard_hits: u64,
    /// Index 0 counts full rejections, index `k` acceptances at stage `k`.
    pub accepted_by_stage: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub dim: usize,
    pub param_names: Vec<String>,
    pub sampler: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub budget: u64,
    pub step_size_ref: Option<f64>,
    pub step_size: f64,
    pub steps: usize,
    pub trajectory_length: Option<f64>,
    pub mass_diagonal: Vec<f64>,
    pub pilot_grad_evals: u64,
    pub chains: Vec<ChainRecord>,
    pub total_grad_evals: u64,
    pub total_divergences: u64,
    pub total_guard_hits: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

/// A run loaded from disk.
pub struct LoadedRun {
    pub manifest: Option<Manifest>,
    pub chains: Vec<ChainOutput>,
    /// Gradient budget: from the manifest, else the largest final count.
    pub budget: u64,
}

pub fn load_run(dir: &Path) -> CliResult<LoadedRun> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Option<Manifest> = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    let files: Vec<PathBuf> = match &manifest {
        Some(m) => m.chains.iter().map(|c| dir.join(&c.file)).collect(),
        None => {
            let mut v: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| CliError::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("chain_") && n.ends_with(".csv"))
                })
                .collect();
            v.sort();
            v
        }
    };
    if files.is_empty() {
        return Err(CliError::usage(format!("{}: no chain files", dir.display())));
    }
    let chains: Vec<ChainOutput> = files.iter().map(|p| read_chain_csv(p)).collect::<CliResult<_>>()?;
    let dim = chains[0].dim;
    if let Some(c) = chains.iter().find(|c| c.dim != dim) {
        return Err(drghmc::Error::DimensionMismatch { expected: dim, actual: c.dim }.into());
    }
    let budget = match &manifest {
        Some(m) => m.budget,
        None => chains.iter().map(|c| c.meta.last().map_or(0, |m| m.cum_grads)).max().unwrap_or(0),
    };
    Ok(LoadedRun { manifest, chains, budget })
}

/// Formats an `f64` for tables; infinities are written as `inf` and `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// Renders a CSV table from a header and stringified rows.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}
