//! Scenario suites: TOML files and the built-in sets.
//!
//! ```toml
//! name = "mixed"
//!
//! [[scenario]]
//! template = "pedestrian_crossing"
//! seed = 3
//! params = { v0 = 6.9 }
//!
//! [[batch]]
//! template = "lead_vehicle"
//! first_seed = 100
//! count = 25
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kbm::KbmParams;

use super::scenario::{build_scenario, Scenario, ScenarioSpec, Template, DEFAULT_FRAMES};
use super::HarnessError;

/// Built-in suite names.
pub const BUILTIN_SUITES: [&str; 5] = ["default", "case_study", "causality", "smoothing", "training"];

/// Seed offsets keep the built-in evaluation suites disjoint from training.
const TRAINING_PER_TEMPLATE: u64 = 30;
const DEFAULT_SEED_BASE: u64 = 1000;
const CAUSALITY_SEED_BASE: u64 = 5000;
const SMOOTHING_SEED_BASE: u64 = 7000;

fn default_frames() -> usize {
    DEFAULT_FRAMES
}

/// Consecutive seeds of one template sharing pinned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Batch {
    pub template: String,
    #[serde(default)]
    pub first_seed: u64,
    pub count: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    name: String,
    #[serde(default)]
    scenario: Vec<ScenarioSpec>,
    #[serde(default)]
    batch: Vec<Batch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub specs: Vec<ScenarioSpec>,
}

impl Suite {
    pub fn from_toml(text: &str) -> Result<Suite, HarnessError> {
        let file: SuiteFile = toml::from_str(text).map_err(|e| HarnessError::Suite(e.to_string()))?;
        let mut specs = file.scenario;
        for b in file.batch {
            for seed in b.first_seed..b.first_seed + b.count {
                specs.push(ScenarioSpec {
                    id: None,
                    template: b.template.clone(),
                    seed,
                    frames: b.frames,
                    params: b.params.clone(),
                });
            }
        }
        Suite::new(&file.name, specs)
    }

    pub fn new(name: &str, specs: Vec<ScenarioSpec>) -> Result<Suite, HarnessError> {
        let mut seen = BTreeSet::new();
        for s in &specs {
            let id = s.default_id();
            if !seen.insert(id.clone()) {
                return Err(HarnessError::Suite(format!("suite {name:?}: duplicate scenario id {id:?}")));
            }
        }
        if specs.is_empty() {
            return Err(HarnessError::Suite(format!("suite {name:?} has no scenarios")));
        }
        Ok(Suite {
            name: name.to_string(),
            specs,
        })
    }

    pub fn load(path: &Path) -> Result<Suite, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Suite(format!("cannot read {}: {e}", path.display())))?;
        Suite::from_toml(&text)
    }

    /// Canonical TOML listing every scenario explicitly.
    pub fn to_toml(&self) -> String {
        let file = SuiteFile {
            name: self.name.clone(),
            scenario: self.specs.clone(),
            batch: Vec::new(),
        };
        toml::to_string(&file).expect("suite specs serialize")
    }

    pub fn builtin(name: &str) -> Result<Suite, HarnessError> {
        let batch = |t: Template, base: u64, n: u64| (base..base + n).map(move |s| ScenarioSpec::new(t, s));
        let specs: Vec<ScenarioSpec> = match name {
            "case_study" => vec![ScenarioSpec::case_study()],
            "default" => std::iter::once(ScenarioSpec::case_study())
                .chain(Template::ALL.iter().flat_map(|&t| batch(t, DEFAULT_SEED_BASE, 4)))
                .collect(),
            "causality" => batch(Template::PedestrianCrossing, CAUSALITY_SEED_BASE, 25)
                .chain(batch(Template::LeadVehicle, CAUSALITY_SEED_BASE, 25))
                .collect(),
            "smoothing" => Template::ALL
                .iter()
                .filter(|&&t| t != Template::EmptyRoad)
                .flat_map(|&t| batch(t, SMOOTHING_SEED_BASE, 5))
                .collect(),
            "training" => Template::ALL
                .iter()
                .flat_map(|&t| batch(t, 0, TRAINING_PER_TEMPLATE))
                .collect(),
            _ => {
                return Err(HarnessError::Suite(format!(
                    "unknown suite {name:?}; built-in suites are {}",
                    BUILTIN_SUITES.join(", ")
                )))
            }
        };
        Suite::new(name, specs)
    }

    /// A path (anything ending in `.toml` or containing a separator) is
    /// loaded from disk; any other name is a built-in suite.
    pub fn resolve(arg: &str) -> Result<Suite, HarnessError> {
        if arg.ends_with(".toml") || arg.contains(std::path::MAIN_SEPARATOR) || arg.contains('/') {
            Suite::load(Path::new(arg))
        } else {
            Suite::builtin(arg)
        }
    }

    pub fn build(&self, kbm: &KbmParams) -> Result<Vec<Scenario>, HarnessError> {
        self.specs.iter().map(|s| build_scenario(s, kbm)).collect()
    }
}
