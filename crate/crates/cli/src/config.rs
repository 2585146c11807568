//! TOML run configuration. Every section is optional; commands pick the
//! sections they need and complain if a required one is missing.

use std::path::{Path, PathBuf};

use pstclock_core::metrics::DEFAULT_TICK_FLOOR;
use pstclock_core::sweep::DEFAULT_FIT_CUTOFF;
use pstclock_core::{expand_profile, ChainSpec, CouplingProfile, DEConfig, Horizon};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub optimizer: DEConfig,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub quench: QuenchSection,
    #[serde(default)]
    pub fit: FitSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            chain: None,
            analysis: AnalysisSection::default(),
            optimizer: DEConfig::default(),
            optimize: OptimizeSection::default(),
            sweep: SweepSection::default(),
            quench: QuenchSection::default(),
            fit: FitSection::default(),
        }
    }
}

/// A chain given either by a coupling profile or by its explicit couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<CouplingProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

impl ChainSection {
    pub fn to_spec(&self) -> Result<ChainSpec, CliError> {
        let spec = match (&self.profile, &self.couplings) {
            (Some(profile), None) => {
                let n = self.n_sites.ok_or_else(|| {
                    CliError::Config("[chain] with a profile needs n_sites".into())
                })?;
                expand_profile(profile, n, self.gamma)?
            }
            (None, Some(couplings)) => {
                if let Some(n) = self.n_sites {
                    if n != couplings.len() + 1 {
                        return Err(CliError::Config(format!(
                            "[chain] n_sites = {n} but {} couplings given",
                            couplings.len()
                        )));
                    }
                }
                ChainSpec::new(couplings.clone(), self.gamma)?
            }
            _ => {
                return Err(CliError::Config(
                    "[chain] needs exactly one of `profile` and `couplings`".into(),
                ))
            }
        };
        Ok(spec)
    }

    /// `J₀` for PST-based profiles.
    pub fn pst_scale(&self) -> Option<f64> {
        match self.profile.as_ref()? {
            CouplingProfile::Pst { j0 } => Some(*j0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub horizon: Horizon,
    /// End of the reported time series; defaults to the statistics window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    pub points: usize,
    pub tick_floor: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            horizon: Horizon::default(),
            t_max: None,
            points: 1000,
            tick_floor: DEFAULT_TICK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
    /// Generations between checkpoint writes; 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        OptimizeSection {
            n_sites: None,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n_sites: Vec<usize>,
    pub seeds: Vec<u64>,
    pub fit_cutoff: usize,
    pub checkpoint_every: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            n_sites: vec![10, 20, 30, 50, 80, 120, 200, 300],
            seeds: vec![0, 1, 2],
            fit_cutoff: DEFAULT_FIT_CUTOFF,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchSection {
    /// Run reports whose optimized chains are swept, in addition to `[chain]`.
    pub runs: Vec<PathBuf>,
    /// Explicit decoupling times; otherwise `points` log-spaced times up to `μ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tdc: Option<Vec<f64>>,
    pub points: usize,
    pub horizon: Horizon,
    pub tick_floor: f64,
}

impl Default for QuenchSection {
    fn default() -> Self {
        QuenchSection {
            runs: Vec::new(),
            tdc: None,
            points: 60,
            horizon: Horizon::default(),
            tick_floor: DEFAULT_TICK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Sweep CSV; defaults to `sweep.csv` in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub cutoff: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            input: None,
            cutoff: DEFAULT_FIT_CUTOFF,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for run in &mut cfg.quench.runs {
            *run = base.join(&*run);
        }
        if let Some(input) = &mut cfg.fit.input {
            *input = base.join(&*input);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn chain_spec(&self) -> Result<ChainSpec, CliError> {
        self.chain
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [chain] section".into()))?
            .to_spec()
    }
}
