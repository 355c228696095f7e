//! Run configuration: every knob a run depends on, loadable from TOML and
//! echoed next to the run's outputs.
//!
//! ```toml
//! suite = "causality"
//! generator = "cache:./responses"
//! ablation = "no-asp"
//!
//! [model]
//! seed = 3
//!
//! [train]
//! learning_rate = 0.003
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditioning::{ModelConfig, TrainConfig};
use crate::harness::Ablation;
use crate::kbm::KbmParams;
use crate::rules::{ArbitrationConfig, CachedGenerator, HttpGenerator, RuleGenerator, TemplateGenerator};

/// Per-request timeout for the HTTP generator.
pub const HTTP_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where rule suggestions come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GeneratorSpec {
    /// Built-in template table.
    Template,
    /// Pre-computed responses in a directory, one file per frame.
    Cache(PathBuf),
    /// External endpoint speaking the predicate request format.
    Http(String),
}

impl GeneratorSpec {
    pub fn build(&self) -> Box<dyn RuleGenerator> {
        match self {
            GeneratorSpec::Template => Box::new(TemplateGenerator),
            GeneratorSpec::Cache(dir) => Box::new(CachedGenerator::new(dir.clone())),
            GeneratorSpec::Http(url) => Box::new(HttpGenerator::new(url.clone(), HTTP_TIMEOUT)),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "template" {
            return Ok(GeneratorSpec::Template);
        }
        if let Some(dir) = s.strip_prefix("cache:").filter(|d| !d.is_empty()) {
            return Ok(GeneratorSpec::Cache(PathBuf::from(dir)));
        }
        if s.starts_with("http:") || s.starts_with("https:") {
            // Accept both `http:<url>` and a bare `http://...` URL.
            let url = s.strip_prefix("http:").filter(|u| u.contains("://")).unwrap_or(s);
            return Ok(GeneratorSpec::Http(url.to_string()));
        }
        Err(format!("unknown generator {s:?}; expected template, cache:<dir> or http:<url>"))
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Template => f.write_str("template"),
            GeneratorSpec::Cache(dir) => write!(f, "cache:{}", dir.display()),
            GeneratorSpec::Http(url) => write!(f, "http:{url}"),
        }
    }
}

impl TryFrom<String> for GeneratorSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GeneratorSpec> for String {
    fn from(g: GeneratorSpec) -> String {
        g.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Evaluation suite: a built-in name or a TOML path.
    pub suite: String,
    /// Suite that supplies expert demonstrations when training.
    pub train_suite: String,
    pub out: PathBuf,
    /// Checkpoint to plan with. When absent, `run` trains one first.
    pub weights: Option<PathBuf>,
    pub generator: GeneratorSpec,
    pub ablation: Ablation,
    pub kbm: KbmParams,
    pub arbitration: ArbitrationConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            suite: "default".into(),
            train_suite: "training".into(),
            out: PathBuf::from("out"),
            weights: None,
            generator: GeneratorSpec::Template,
            ablation: Ablation::None,
            kbm: KbmParams::default(),
            arbitration: ArbitrationConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// One seed for weight initialisation and batch shuffling.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
    }

    /// Training weights with the ablation applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.ablation.loss_weights(self.train.loss),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.kbm.validate().map_err(|e| invalid(&e))?;
        self.arbitration.validate().map_err(|e| invalid(&e))?;
        self.model.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        if self.arbitration.speed_targets != self.model.speed_targets {
            return Err(ConfigError::Invalid(
                "arbitration.speed_targets and model.speed_targets must be identical".into(),
            ));
        }
        if self.suite.is_empty() || self.train_suite.is_empty() {
            return Err(ConfigError::Invalid("suite names must be non-empty".into()));
        }
        Ok(())
    }
}
