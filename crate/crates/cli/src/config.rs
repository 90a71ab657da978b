//! Experiment configuration.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Keys:
//!
//! | key                 | default      | meaning                                        |
//! |---------------------|--------------|------------------------------------------------|
//! | `model`             | `funnel`     | one of the bundled model names                 |
//! | `dimension`         | model's own  | dimension for `funnel` and `gaussian`          |
//! | `data`              | bundled      | JSON dataset path                              |
//! | `rho`               | 0            | correlation of the `gaussian` model            |
//! | `sampler`           | `drghmc`     | `drghmc`, `drhmc`, `ghmc` or `hmc`             |
//! | `max_proposals`     | 3            | K                                              |
//! | `damping`           | 0.08         | gamma                                          |
//! | `step_size`         | tuned        | absolute initial step size, skips tuning       |
//! | `step_size_factor`  | 2            | c in `eps = c * eps_ref`                       |
//! | `reduction`         | 4            | r                                              |
//! | `steps`             | 1 or 8       | leapfrog steps of the first proposal           |
//! | `trajectory_length` | `eps*steps`  | tau for `drhmc`                                |
//! | `mass`              | `identity`   | `identity` or `diagonal` (from a pilot run)    |
//! | `chains`            | 20           | number of chains                               |
//! | `budget`            | 100000       | gradient evaluations per chain                 |
//! | `seed`              | 0            | master seed; chain `i` uses stream `i`         |
//! | `out`               | derived      | output directory                               |
//! | `reference`         | none         | reference directory (initial points, metrics)  |
//! | `workers`           | all cores    | worker threads, capped by `chains`             |
//! | `pilot_iterations`  | 200          | iterations per step-size candidate             |
//! | `pilot_budget`      | 20000        | gradient budget of the mass-matrix pilot       |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use drghmc::sampler::SamplerKind;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassPolicy {
    Identity,
    Diagonal,
}

impl fmt::Display for MassPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MassPolicy::Identity => "identity",
            MassPolicy::Diagonal => "diagonal",
        })
    }
}

impl FromStr for MassPolicy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "identity" => Ok(MassPolicy::Identity),
            "diagonal" => Ok(MassPolicy::Diagonal),
            other => Err(CliError::usage(format!("unknown mass policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: String,
    pub dimension: Option<usize>,
    pub data: Option<PathBuf>,
    pub rho: f64,
    pub sampler: SamplerKind,
    pub max_proposals: usize,
    pub damping: f64,
    pub step_size: Option<f64>,
    pub step_size_factor: f64,
    pub reduction: f64,
    pub steps: Option<usize>,
    pub trajectory_length: Option<f64>,
    pub mass: MassPolicy,
    pub chains: usize,
    pub budget: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub workers: Option<usize>,
    pub pilot_iterations: usize,
    pub pilot_budget: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: "funnel".into(),
            dimension: None,
            data: None,
            rho: 0.0,
            sampler: SamplerKind::DrGhmc,
            max_proposals: 3,
            damping: 0.08,
            step_size: None,
            step_size_factor: 2.0,
            reduction: 4.0,
            steps: None,
            trajectory_length: None,
            mass: MassPolicy::Identity,
            chains: 20,
            budget: 100_000,
            seed: 0,
            out: None,
            reference: None,
            workers: None,
            pilot_iterations: 200,
            pilot_budget: 20_000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_budget(key: &str, value: &str) -> CliResult<u64> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    // allow 1e5 style
    match value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(CliError::usage(format!("invalid value `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Leapfrog steps of the first proposal: 1 for G-HMC variants, 8 for
    /// HMC variants unless set.
    pub fn initial_steps(&self) -> usize {
        self.steps.unwrap_or(match self.sampler {
            SamplerKind::DrGhmc | SamplerKind::Ghmc => 1,
            SamplerKind::DrHmc | SamplerKind::Hmc => 8,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "model" => self.model = value.to_string(),
            "dimension" => self.dimension = Some(parse(key, value)?),
            "data" => self.data = Some(PathBuf::from(value)),
            "rho" => self.rho = parse(key, value)?,
            "sampler" => {
                self.sampler = value.parse().map_err(|e: drghmc::Error| CliError::usage(e.to_string()))?
            }
            "max_proposals" | "K" => self.max_proposals = parse(key, value)?,
            "damping" | "gamma" => self.damping = parse(key, value)?,
            "step_size" => self.step_size = Some(parse(key, value)?),
            "step_size_factor" | "c" => self.step_size_factor = parse(key, value)?,
            "reduction" | "r" => self.reduction = parse(key, value)?,
            "steps" => self.steps = Some(parse(key, value)?),
            "trajectory_length" => self.trajectory_length = Some(parse(key, value)?),
            "mass" => self.mass = value.parse()?,
            "chains" => self.chains = parse(key, value)?,
            "budget" => self.budget = parse_budget(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "reference" => self.reference = Some(PathBuf::from(value)),
            "workers" => self.workers = Some(parse(key, value)?),
            "pilot_iterations" => self.pilot_iterations = parse(key, value)?,
            "pilot_budget" => self.pilot_budget = parse_budget(key, value)?,
            other => return Err(CliError::usage(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::usage(m.to_string()));
        if !drghmc::model::MODEL_NAMES.contains(&self.model.as_str()) {
            return bad(&format!("unknown model `{}`", self.model));
        }
        if self.chains == 0 {
            return bad("chains must be at least 1");
        }
        if self.max_proposals == 0 {
            return bad("max_proposals must be at least 1");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.reduction > 1.0) {
            return bad("reduction must exceed 1");
        }
        if !(self.step_size_factor > 0.0) {
            return bad("step_size_factor must be positive");
        }
        if matches!(self.step_size, Some(e) if !(e > 0.0 && e.is_finite())) {
            return bad("step_size must be positive");
        }
        if matches!(self.trajectory_length, Some(t) if !(t > 0.0 && t.is_finite())) {
            return bad("trajectory_length must be positive");
        }
        if self.steps == Some(0) {
            return bad("steps must be at least 1");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1)");
        }
        if self.pilot_iterations == 0 {
            return bad("pilot_iterations must be at least 1");
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    /// Every key with its effective value, in documentation order. Unset
    /// optional keys are omitted.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut v: Vec<(&'static str, String)> = vec![("model", self.model.clone())];
        if let Some(d) = self.dimension {
            v.push(("dimension", d.to_string()));
        }
        if let Some(p) = &self.data {
            v.push(("data", p.display().to_string()));
        }
        v.push(("rho", self.rho.to_string()));
        v.push(("sampler", self.sampler.to_string()));
        v.push(("max_proposals", self.max_proposals.to_string()));
        v.push(("damping", self.damping.to_string()));
        if let Some(e) = self.step_size {
            v.push(("step_size", e.to_string()));
        }
        v.push(("step_size_factor", self.step_size_factor.to_string()));
        v.push(("reduction", self.reduction.to_string()));
        v.push(("steps", self.initial_steps().to_string()));
        if let Some(t) = self.trajectory_length {
            v.push(("trajectory_length", t.to_string()));
        }
        v.push(("mass", self.mass.to_string()));
        v.push(("chains", self.chains.to_string()));
        v.push(("budget", self.budget.to_string()));
        v.push(("seed", self.seed.to_string()));
        if let Some(p) = &self.reference {
            v.push(("reference", p.display().to_string()));
        }
        v.push(("pilot_iterations", self.pilot_iterations.to_string()));
        v.push(("pilot_budget", self.pilot_budget.to_string()));
        v
    }

    /// Config file text that reproduces this configuration (output
    /// location and worker count excluded).
    pub fn to_file_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let cfg = ExperimentConfig::parse_str(
            "# comment\nmodel = eight_schools\nsampler=drhmc\n\nbudget = 1e4 # trailing\ngamma = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.model, "eight_schools");
        assert_eq!(cfg.sampler, SamplerKind::DrHmc);
        assert_eq!(cfg.budget, 10_000);
        assert_eq!(cfg.damping, 0.2);
        assert_eq!(cfg.initial_steps(), 8);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(ExperimentConfig::parse_str("colour = red").is_err());
        assert!(ExperimentConfig::parse_str("sampler = nuts").is_err());
        assert!(ExperimentConfig::parse_str("chains").is_err());
        let cfg = ExperimentConfig::parse_str("damping = 1.5").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn file_text_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("model", "gaussian").unwrap();
        cfg.set("dimension", "4").unwrap();
        cfg.set("rho", "0.5").unwrap();
        cfg.set("step_size", "0.25").unwrap();
        let back = ExperimentConfig::parse_str(&cfg.to_file_text()).unwrap();
        assert_eq!(back.entries(), cfg.entries());
    }
}
