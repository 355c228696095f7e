use crate::predicate::{Action, RuleType, SceneFacts, SpeedSymbol, Suggestion};

use super::ArbitrationConfig;

/// A fixed physical safety rule: when `guard` holds, emit `emits`.
#[derive(Clone, Copy)]
pub struct SafetyAxiom {
    pub name: &'static str,
    pub guard: fn(&SceneFacts, &ArbitrationConfig) -> bool,
    pub emits: (Action, SpeedSymbol, RuleType),
}

impl std::fmt::Debug for SafetyAxiom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SafetyAxiom")
            .field("name", &self.name)
            .field("emits", &self.emits)
            .finish()
    }
}

impl SafetyAxiom {
    pub fn provenance(&self) -> String {
        format!("axiom:{}", self.name)
    }

    pub fn suggestion(&self) -> Suggestion {
        let (a, s, t) = self.emits;
        Suggestion::new(a, s, t, self.provenance())
    }
}

fn emergency_guard(f: &SceneFacts, cfg: &ArbitrationConfig) -> bool {
    f.min_ttc() < cfg.ttc_emergency_s
}

fn safe_following_guard(f: &SceneFacts, cfg: &ArbitrationConfig) -> bool {
    f.min_ttc() < cfg.ttc_safety_s
}

/// Built-in axioms in evaluation order; the first that fires wins.
pub const STANDARD_AXIOMS: [SafetyAxiom; 2] = [
    SafetyAxiom {
        name: "emergency_braking",
        guard: emergency_guard,
        emits: (Action::EmergencyStop, SpeedSymbol::Zero, RuleType::Emergency),
    },
    SafetyAxiom {
        name: "safe_following",
        guard: safe_following_guard,
        emits: (Action::Yield, SpeedSymbol::Zero, RuleType::Safety),
    },
];

/// Evaluate the safety axioms against one frame.
///
/// Emits at most one suggestion: emergency braking below
/// `ttc_emergency_s`, otherwise safe following below `ttc_safety_s`.
pub fn apply_axioms(facts: &SceneFacts, cfg: &ArbitrationConfig) -> Vec<Suggestion> {
    STANDARD_AXIOMS
        .iter()
        .find(|ax| (ax.guard)(facts, cfg))
        .map(|ax| vec![ax.suggestion()])
        .unwrap_or_default()
}
