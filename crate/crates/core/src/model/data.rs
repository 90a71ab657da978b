//! Observed data for the bundled posteriors.
//!
//! File schemas (JSON objects):
//!
//! | model           | keys                                              |
//! |-----------------|---------------------------------------------------|
//! | `eight_schools` | `y: [f64; 8]`, `sigma: [f64; 8]` (all `sigma > 0`) |
//! | `normal100`     | `rho: f64` in `(0, 1)`                            |
//! | `stoch_vol`     | `y: [f64; T]` mean-corrected returns              |
//! | `irt_2pl`       | `I: students`, `J: questions`, `y: I x J` of 0/1  |
//!
//! The synthetic files are produced by [`synthesize_stoch_vol`] and
//! [`synthesize_irt`] with the seeds below.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::math::sigmoid;
use crate::{Error, Result};

pub const NORMAL100_RHO: f64 = 0.9;
pub const STOCH_VOL_SEED: u64 = 20_240_917;
pub const IRT_SEED: u64 = 20_240_918;

const EIGHT_SCHOOLS_JSON: &str = include_str!("../../data/eight_schools.json");
const NORMAL100_JSON: &str = include_str!("../../data/normal100.json");
const STOCH_VOL_JSON: &str = include_str!("../../data/stoch_vol.json");
const IRT_JSON: &str = include_str!("../../data/irt_2pl.json");

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetBundle {
    EightSchools { y: Vec<f64>, sigma: Vec<f64> },
    Normal { rho: f64 },
    StochVol { y: Vec<f64> },
    Irt { students: usize, questions: usize, y: Vec<Vec<u8>> },
}

#[derive(Serialize, Deserialize)]
struct EightSchoolsFile {
    y: Vec<f64>,
    sigma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormalFile {
    rho: f64,
}

#[derive(Serialize, Deserialize)]
struct StochVolFile {
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct IrtFile {
    I: usize,
    J: usize,
    y: Vec<Vec<u8>>,
}

impl DatasetBundle {
    /// The dataset shipped with the crate for `model`, if it needs one.
    pub fn bundled(model: &str) -> Result<Option<Self>> {
        let text = match model {
            "eight_schools" => EIGHT_SCHOOLS_JSON,
            "normal100" => NORMAL100_JSON,
            "stoch_vol" => STOCH_VOL_JSON,
            "irt_2pl" => IRT_JSON,
            _ => return Ok(None),
        };
        Self::from_json(model, text).map(Some)
    }

    pub fn load(model: &str, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(model, &text)
    }

    pub fn from_json(model: &str, text: &str) -> Result<Self> {
        let bundle = match model {
            "eight_schools" => {
                let f: EightSchoolsFile = serde_json::from_str(text)?;
                DatasetBundle::EightSchools { y: f.y, sigma: f.sigma }
            }
            "normal100" | "gaussian" => {
                let f: NormalFile = serde_json::from_str(text)?;
                DatasetBundle::Normal { rho: f.rho }
            }
            "stoch_vol" => {
                let f: StochVolFile = serde_json::from_str(text)?;
                DatasetBundle::StochVol { y: f.y }
            }
            "irt_2pl" => {
                let f: IrtFile = serde_json::from_str(text)?;
                DatasetBundle::Irt { students: f.I, questions: f.J, y: f.y }
            }
            other => return Err(Error::UnknownModel(other.to_string())),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_json(&self) -> Result<String> {
        let text = match self {
            DatasetBundle::EightSchools { y, sigma } => {
                serde_json::to_string(&EightSchoolsFile { y: y.clone(), sigma: sigma.clone() })?
            }
            DatasetBundle::Normal { rho } => serde_json::to_string(&NormalFile { rho: *rho })?,
            DatasetBundle::StochVol { y } => serde_json::to_string(&StochVolFile { y: y.clone() })?,
            DatasetBundle::Irt { students, questions, y } => serde_json::to_string(&IrtFile {
                I: *students,
                J: *questions,
                y: y.clone(),
            })?,
        };
        Ok(text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidData(m));
        match self {
            DatasetBundle::EightSchools { y, sigma } => {
                if y.is_empty() || y.len() != sigma.len() {
                    return bad(format!("y has {} entries, sigma has {}", y.len(), sigma.len()));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return bad("non-finite y".into());
                }
                if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return bad("sigma must be positive".into());
                }
            }
            DatasetBundle::Normal { rho } => {
                if !(*rho > 0.0 && *rho < 1.0) {
                    return bad(format!("rho = {rho} outside (0, 1)"));
                }
            }
            DatasetBundle::StochVol { y } => {
                if y.len() < 2 || y.iter().any(|v| !v.is_finite()) {
                    return bad("returns must be finite with at least 2 entries".into());
                }
            }
            DatasetBundle::Irt { students, questions, y } => {
                if *students == 0 || *questions == 0 {
                    return bad("empty response matrix".into());
                }
                if y.len() != *students || y.iter().any(|row| row.len() != *questions) {
                    return bad(format!("response matrix is not {students} x {questions}"));
                }
                if y.iter().flatten().any(|&v| v > 1) {
                    return bad("responses must be 0 or 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Simulated returns from the stochastic volatility model with
/// `mu = -1`, `phi = 0.95`, `sigma = 0.25` and `len` time steps.
pub fn synthesize_stoch_vol(len: usize, seed: u64) -> DatasetBundle {
    let (mu, phi, sigma) = (-1.0_f64, 0.95_f64, 0.25_f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(len);
    let stationary_sd = sigma / (1.0 - phi * phi).sqrt();
    let mut h = mu + stationary_sd * rng.sample::<f64, _>(StandardNormal);
    for t in 0..len {
        if t > 0 {
            h = mu + phi * (h - mu) + sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let eps: f64 = rng.sample(StandardNormal);
        y.push(round6((0.5 * h).exp() * eps));
    }
    DatasetBundle::StochVol { y }
}

/// Simulated 2PL responses: abilities ~ N(0, 1), discriminations
/// ~ lognormal(0, 0.5), difficulties ~ N(0, 1).
pub fn synthesize_irt(students: usize, questions: usize, seed: u64) -> DatasetBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let ability: Vec<f64> = (0..students).map(|_| std.sample(&mut rng)).collect();
    let discrimination: Vec<f64> =
        (0..questions).map(|_| (0.5 * std.sample(&mut rng)).exp()).collect();
    let difficulty: Vec<f64> = (0..questions).map(|_| std.sample(&mut rng)).collect();
    let y = ability
        .iter()
        .map(|&th| {
            (0..questions)
                .map(|j| {
                    let p = sigmoid(discrimination[j] * (th - difficulty[j]));
                    u8::from(rng.random::<f64>() < p)
                })
                .collect()
        })
        .collect();
    DatasetBundle::Irt { students, questions, y }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
