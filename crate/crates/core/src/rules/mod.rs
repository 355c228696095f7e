//! Suggestion generation and tiered arbitration.
//!
//! [`decide`] unions the safety-axiom output, the generator output and a
//! default progress suggestion, then [`arbitrate`]s them into exactly one
//! [`FinalDecision`]. A failing generator degrades to axioms plus default;
//! it never blocks the axioms.

mod arbitrate;
mod axioms;
mod generator;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicate::{Action, FinalDecision, ParseError, RuleType, SceneFacts, SpeedSymbol, SpeedTargets, Suggestion};

pub use arbitrate::{arbitrate, compare};
pub use axioms::{apply_axioms, SafetyAxiom, STANDARD_AXIOMS};
pub use generator::{
    cache_path, format_request, parse_request, respond, write_cache_entry, CachedGenerator, HttpGenerator,
    RequestMeta,
};
pub use template::{template_row, SpeedBand, TemplateGenerator, TemplateKey, Threat, TtcBand};

/// Upper bound on suggestions taken from one generator call.
pub const MAX_GENERATED: usize = 6;
pub const DEFAULT_PROVENANCE: &str = "default:progress";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("arbitration needs at least one suggestion")]
    EmptyInput,
    #[error("invalid arbitration config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("no cached suggestions for frame {frame_id:?} at {path}")]
    CacheMiss { frame_id: String, path: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed generator response: {0}")]
    Malformed(#[from] ParseError),
    #[error("generator returned no valid suggestions")]
    Empty,
    /// A failure recorded in an earlier run, reproduced verbatim on replay.
    #[error("{0}")]
    Recorded(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArbitrationConfig {
    pub ttc_emergency_s: f64,
    pub ttc_safety_s: f64,
    pub speed_targets: SpeedTargets,
}

impl Default for ArbitrationConfig {
    fn default() -> Self {
        ArbitrationConfig {
            ttc_emergency_s: 0.5,
            ttc_safety_s: 1.5,
            speed_targets: SpeedTargets::default(),
        }
    }
}

impl ArbitrationConfig {
    pub fn validate(&self) -> Result<(), RuleError> {
        if !(self.ttc_emergency_s > 0.0 && self.ttc_emergency_s < self.ttc_safety_s) {
            return Err(RuleError::InvalidConfig(format!(
                "need 0 < ttc_emergency_s ({}) < ttc_safety_s ({})",
                self.ttc_emergency_s, self.ttc_safety_s
            )));
        }
        if !self.speed_targets.is_monotone() {
            return Err(RuleError::InvalidConfig("speed targets must increase zero < creep < slow < normal < fast".into()));
        }
        Ok(())
    }
}

/// Suggestions accepted from one generator call, plus a note for each
/// suggestion that was dropped during validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeneratorOutput {
    pub suggestions: Vec<Suggestion>,
    pub rejected: Vec<String>,
}

impl GeneratorOutput {
    pub fn accepted(suggestions: Vec<Suggestion>) -> Self {
        GeneratorOutput {
            suggestions,
            rejected: Vec::new(),
        }
    }
}

/// Source of candidate suggestions for a frame (3 to 6 per call).
pub trait RuleGenerator: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, facts: &SceneFacts) -> Result<GeneratorOutput, GeneratorError>;
}

/// `suggestion(keep_lane, current, efficiency)`, appended to every frame so
/// arbitration is total.
pub fn default_suggestion() -> Suggestion {
    Suggestion::new(Action::KeepLane, SpeedSymbol::Current, RuleType::Efficiency, DEFAULT_PROVENANCE)
}

/// Audit record of one arbitration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub generator: String,
    /// Axiom output, then generator output, then the default.
    pub suggestions: Vec<Suggestion>,
    pub rejected: Vec<String>,
    pub generator_error: Option<String>,
    pub decision: FinalDecision,
}

/// Run axioms and generator for one frame and arbitrate.
pub fn decide(facts: &SceneFacts, generator: &dyn RuleGenerator, cfg: &ArbitrationConfig) -> (FinalDecision, DecisionTrace) {
    let mut suggestions = apply_axioms(facts, cfg);
    let mut rejected = Vec::new();
    let mut generator_error = None;
    match generator.generate(facts) {
        Ok(out) => {
            let GeneratorOutput {
                suggestions: mut generated,
                rejected: dropped,
            } = out;
            rejected = dropped;
            if generated.len() > MAX_GENERATED {
                rejected.push(format!("truncated {} suggestions beyond {MAX_GENERATED}", generated.len() - MAX_GENERATED));
                generated.truncate(MAX_GENERATED);
            }
            suggestions.extend(generated);
        }
        Err(e) => generator_error = Some(e.to_string()),
    }
    suggestions.push(default_suggestion());
    let decision = arbitrate(&suggestions, facts.ego.speed, cfg).expect("default suggestion keeps the list non-empty");
    let trace = DecisionTrace {
        generator: generator.id(),
        suggestions,
        rejected,
        generator_error,
        decision: decision.clone(),
    };
    (decision, trace)
}
