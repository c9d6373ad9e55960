//! Run configuration read from a TOML file.
//!
//! ```toml
//! seed = 7
//! n_paths = 4
//!
//! [economy]
//! xi = 0.6
//! mu_bar = 0.05
//! sigma_d = 0.2
//! sigma_mu = 0.16
//! phi = 0.5
//!
//! [grid]
//! dt = 0.001
//! horizon = 50.0
//!
//! [[agents]]
//! prefs = { gamma = 2.0, rho = 0.02, beta = 0.0, c0 = 0.5 }
//! beliefs = { mu_bar = 0.05, mu0 = 0.05, phi = 0.5 }
//!
//! [[agents]]
//! prefs = { gamma = 4.0, rho = 0.02, beta = 0.0, c0 = 0.5 }
//! beliefs = { mu_bar = 0.05, mu0 = 0.05, phi = 0.5 }
//!
//! [outputs]
//! dir = "out"
//! stride = 10
//! ```
//!
//! Every block is optional and unknown keys are rejected. The fully resolved
//! configuration is echoed to `effective_config.toml` in the output directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::{FunctionalId, Functional};
use crate::equilibrium::{validate_agents, AgentSpec};
use crate::error::{Error, Result};
use crate::paths::{EconomyParams, PathGrid, DEFAULT_DT};
use crate::selection::{RegionGridSpec, KAPPA_TIE_TOLERANCE};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

/// Time step plus exactly one of `n_steps` or `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            n_steps: None,
            horizon: Some(10.0),
        }
    }
}

impl GridConfig {
    pub fn to_grid(&self, seed: u64) -> Result<PathGrid> {
        let grid = match (self.n_steps, self.horizon) {
            (Some(n), None) => PathGrid::new(self.dt, n, seed, 0),
            (None, Some(h)) => {
                if !(h.is_finite() && h > 0.0) {
                    return Err(Error::config("grid.horizon", "must be finite and > 0"));
                }
                PathGrid::with_horizon(self.dt, h, seed, 0)
            }
            (None, None) => return Err(Error::config("grid", "set one of n_steps or horizon")),
            (Some(_), Some(_)) => return Err(Error::config("grid", "set only one of n_steps or horizon")),
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write every `stride`-th grid point (the final point is always written).
    pub stride: usize,
    pub paths: bool,
    pub filters: bool,
    pub equilibrium: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            stride: 1,
            paths: true,
            filters: true,
            equilibrium: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConfig {
    /// Survival indices closer than this count as tied.
    pub tolerance: f64,
    /// Habit strengths to sweep every agent over.
    pub beta_sweep: Vec<f64>,
    /// Trailing fraction of the run used for extinction slopes.
    pub extinction_window: f64,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        Self {
            tolerance: KAPPA_TIE_TOLERANCE,
            beta_sweep: Vec::new(),
            extinction_window: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_seeds: u64,
    pub functionals: Vec<FunctionalId>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 2000.0,
            n_seeds: 10,
            functionals: Functional::ALL.into_iter().map(FunctionalId::default_for).collect(),
        }
    }
}

impl VerifyConfig {
    pub fn grid(&self, seed: u64) -> Result<PathGrid> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("verify.horizon", "must be finite and > 0"));
        }
        let g = PathGrid::with_horizon(self.dt, self.horizon, seed, 0);
        g.validate().map_err(|_| Error::config("verify.dt", "must be finite and > 0"))?;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_paths: u64,
    /// Worker threads; all available cores when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub economy: EconomyParams,
    pub grid: GridConfig,
    pub agents: Vec<AgentSpec>,
    pub outputs: OutputConfig,
    pub survival: SurvivalConfig,
    pub region: RegionGridSpec,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_paths: 1,
            threads: None,
            economy: EconomyParams::default(),
            grid: GridConfig::default(),
            agents: Vec::new(),
            outputs: OutputConfig::default(),
            survival: SurvivalConfig::default(),
            region: RegionGridSpec::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate_common()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks that hold for every command; agent checks are left to the commands that need agents.
    pub fn validate_common(&self) -> Result<()> {
        self.economy.validate()?;
        if self.n_paths == 0 {
            return Err(Error::config("n_paths", "must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be >= 1"));
        }
        if self.outputs.stride == 0 {
            return Err(Error::config("outputs.stride", "must be >= 1"));
        }
        let w = self.survival.extinction_window;
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::config("survival.extinction_window", "must lie in (0, 1]"));
        }
        if self.survival.tolerance.is_nan() || self.survival.tolerance < 0.0 {
            return Err(Error::config("survival.tolerance", "must be >= 0"));
        }
        if let Some(b) = self.survival.beta_sweep.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::config("survival.beta_sweep", format!("habit strength {b} must be >= 0")));
        }
        if !self.agents.is_empty() {
            validate_agents(&self.agents)?;
        }
        Ok(())
    }

    pub fn require_agents(&self) -> Result<()> {
        validate_agents(&self.agents)
    }

    pub fn path_grid(&self) -> Result<PathGrid> {
        self.grid.to_grid(self.seed)
    }

    /// Writes the effective configuration into the output directory, creating it.
    pub fn echo(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.outputs.dir)?;
        let path = self.outputs.dir.join(EFFECTIVE_CONFIG_FILE);
        std::fs::write(&path, self.to_toml_string()?)?;
        Ok(path)
    }
}
