use std::fmt;
use std::str::FromStr;

use crate::integrator::{MassMatrix, StageSchedule, StepCount};
use crate::{Error, Result};

/// Delayed-rejection generalized HMC (and plain G-HMC when `max_proposals == 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DrGhmcConfig {
    pub max_proposals: usize,
    pub damping: f64,
    pub step_size: f64,
    pub reduction: f64,
    /// Leapfrog steps per proposal, identical at every stage.
    pub steps: usize,
    pub mass: MassMatrix,
    pub seed: u64,
}

impl DrGhmcConfig {
    /// `K = 3`, `gamma = 0.08`, `r = 4`, one leapfrog step, identity mass.
    pub fn new(dim: usize, step_size: f64) -> Self {
        Self {
            max_proposals: 3,
            damping: 0.08,
            step_size,
            reduction: 4.0,
            steps: 1,
            mass: MassMatrix::identity(dim),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_proposals == 0 {
            return Err(Error::InvalidConfig("max proposals must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_proposals > 1 && self.reduction <= 1.0 {
            return Err(Error::InvalidConfig("reduction factor must be > 1".into()));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<StageSchedule> {
        StageSchedule::new(self.step_size, self.reduction, StepCount::Fixed(self.steps))
    }
}

/// Delayed-rejection HMC: full momentum refresh, constant trajectory length.
#[derive(Debug, Clone, PartialEq)]
pub struct DrHmcConfig {
    pub max_proposals: usize,
    pub step_size: f64,
    pub reduction: f64,
    pub trajectory_length: f64,
    pub mass: MassMatrix,
    pub seed: u64,
}

impl DrHmcConfig {
    /// `K = 3`, `r = 4`, trajectory length `step_size * steps`.
    pub fn new(dim: usize, step_size: f64, steps: usize) -> Self {
        Self {
            max_proposals: 3,
            step_size,
            reduction: 4.0,
            trajectory_length: step_size * steps as f64,
            mass: MassMatrix::identity(dim),
            seed: 0,
        }
    }

    /// Initial leapfrog steps `n = tau / eps`.
    pub fn initial_steps(&self) -> usize {
        self.schedule().map(|s| s.steps(1)).unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_proposals == 0 {
            return Err(Error::InvalidConfig("max proposals must be >= 1".into()));
        }
        if self.max_proposals > 1 && self.reduction <= 1.0 {
            return Err(Error::InvalidConfig("reduction factor must be > 1".into()));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<StageSchedule> {
        StageSchedule::new(
            self.step_size,
            self.reduction,
            StepCount::TrajectoryLength(self.trajectory_length),
        )
    }
}

/// Plain HMC with a fixed number of leapfrog steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub step_size: f64,
    pub steps: usize,
    pub mass: MassMatrix,
    pub seed: u64,
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        StageSchedule::new(self.step_size, 1.0, StepCount::Fixed(self.steps)).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    DrGhmc,
    DrHmc,
    Ghmc,
    Hmc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] =
        [SamplerKind::DrGhmc, SamplerKind::DrHmc, SamplerKind::Ghmc, SamplerKind::Hmc];

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::DrGhmc => "drghmc",
            SamplerKind::DrHmc => "drhmc",
            SamplerKind::Ghmc => "ghmc",
            SamplerKind::Hmc => "hmc",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampler `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    DrGhmc(DrGhmcConfig),
    DrHmc(DrHmcConfig),
    /// Generalized HMC; `max_proposals` is forced to one.
    Ghmc(DrGhmcConfig),
    Hmc(HmcConfig),
}

impl SamplerConfig {
    pub fn kind(&self) -> SamplerKind {
        match self {
            SamplerConfig::DrGhmc(_) => SamplerKind::DrGhmc,
            SamplerConfig::DrHmc(_) => SamplerKind::DrHmc,
            SamplerConfig::Ghmc(_) => SamplerKind::Ghmc,
            SamplerConfig::Hmc(_) => SamplerKind::Hmc,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            SamplerConfig::DrGhmc(c) | SamplerConfig::Ghmc(c) => c.seed,
            SamplerConfig::DrHmc(c) => c.seed,
            SamplerConfig::Hmc(c) => c.seed,
        }
    }

    pub fn mass(&self) -> &MassMatrix {
        match self {
            SamplerConfig::DrGhmc(c) | SamplerConfig::Ghmc(c) => &c.mass,
            SamplerConfig::DrHmc(c) => &c.mass,
            SamplerConfig::Hmc(c) => &c.mass,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerConfig::DrGhmc(c) => c.validate(),
            SamplerConfig::Ghmc(c) => DrGhmcConfig { max_proposals: 1, ..c.clone() }.validate(),
            SamplerConfig::DrHmc(c) => c.validate(),
            SamplerConfig::Hmc(c) => c.validate(),
        }
    }
}
