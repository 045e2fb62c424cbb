//! Run configuration file (TOML) and command-line overrides.

use std::path::{Path, PathBuf};

use medmi_core::datagen::{DgmParams, MdagLabel, MdagSpec};
use medmi_core::impute::MethodKind;
use medmi_core::mediation::EstimatorKind;
use medmi_core::simstudy::{ScenarioConfig, SimError, TRUTH_N};
use medmi_core::variance::VarianceApproach;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

/// Replications of the full-scale study.
pub const FULL_REPS: usize = 2000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("config: schema version {0} is not supported (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("config: {0}")]
    Invalid(String),
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Everything a subcommand needs. Every key is optional; omitted keys take
/// the defaults shown by `medmi config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Output directory; must exist.
    pub out: PathBuf,
    /// 0 quiet, 1 progress, 2 per-replication detail.
    pub verbosity: u8,
    /// Size and seed of the complete sample used for the true effects.
    pub truth_n: usize,
    pub truth_seed: u64,
    /// Write SVG plots next to the report tables.
    pub plots: bool,
    /// `analyze` also writes the completed datasets of MI methods.
    pub export_imputations: bool,
    pub scenario: ScenarioConfig,
    pub params: DgmParams,
    /// Replaces the preset mechanism of `scenario.mdag` when given.
    pub mdag: Option<MdagSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_VERSION,
            out: PathBuf::from("."),
            verbosity: 1,
            truth_n: TRUTH_N,
            truth_seed: 1,
            plots: false,
            export_imputations: false,
            scenario: ScenarioConfig::default(),
            params: DgmParams::default(),
            mdag: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: RunConfig = toml::from_str(text)?;
        if c.schema_version != CONFIG_VERSION {
            return Err(ConfigError::Version(c.schema_version));
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    /// The explicit mechanism, or the (optionally calibrated) preset.
    pub fn mdag_spec(&self) -> Result<MdagSpec, ConfigError> {
        match &self.mdag {
            Some(m) => {
                m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if m.label != self.scenario.mdag {
                    return Err(ConfigError::Invalid(format!(
                        "mdag.label {} disagrees with scenario.mdag {}",
                        m.label, self.scenario.mdag
                    )));
                }
                Ok(m.clone())
            }
            None => Ok(self.scenario.mdag_spec(&self.params)?),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.truth_n == 0 {
            return Err(ConfigError::Invalid("truth_n must be positive".into()));
        }
        if let Some(m) = &self.mdag {
            m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
    pub n: Option<usize>,
    pub mdag: Option<MdagLabel>,
    pub methods: Option<Vec<MethodKind>>,
    pub estimator: Option<EstimatorKind>,
    pub approaches: Option<Vec<VarianceApproach>>,
    /// Imputations per MI-Boot analysis (and per point estimate).
    pub m: Option<usize>,
    /// Bootstrap samples for every approach.
    pub b: Option<usize>,
    pub draws: Option<usize>,
    /// Run the full 2000-replication study.
    pub full: bool,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        let s = &mut c.scenario;
        if let Some(v) = self.seed {
            s.base_seed = v;
        }
        if let Some(v) = self.threads {
            s.threads = v;
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if self.full {
            s.reps = FULL_REPS;
        }
        if let Some(v) = self.reps {
            s.reps = v;
        }
        if let Some(v) = self.n {
            s.n = v;
        }
        if let Some(v) = self.mdag {
            s.mdag = v;
            if c.mdag.as_ref().is_some_and(|m| m.label != v) {
                c.mdag = None;
            }
        }
        if let Some(v) = self.estimator {
            // Default method lists follow the estimator unless given.
            if self.methods.is_none() && s.methods == MethodKind::for_estimator(s.estimator) {
                s.methods = MethodKind::for_estimator(v);
            }
            s.estimator = v;
        }
        if let Some(v) = &self.methods {
            s.methods = v.clone();
        }
        if let Some(v) = &self.approaches {
            s.approaches = v.clone();
        }
        if let Some(v) = self.m {
            s.variance.miboot_m = v;
        }
        if let Some(v) = self.b {
            s.variance.boot_b = v;
            s.variance.miboot_b = v;
            s.variance.bootmi_b = v;
        }
        if let Some(v) = self.draws {
            s.mc_draws = v;
        }
    }
}
