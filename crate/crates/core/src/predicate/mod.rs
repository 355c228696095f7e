//! Symbolic vocabulary, scene-fact data model and the predicate text format.

mod facts;
mod parse;
mod serialize;
pub mod vocab;

pub use facts::{
    compute_ttc, EgoFacts, FinalDecision, ObjectFact, SceneFacts, Suggestion, CLOSING_SPEED_EPS,
};
pub use parse::{
    parse_facts, parse_facts_bytes, parse_suggestions, parse_suggestions_bytes,
    parse_suggestions_from, parse_suggestions_lenient, ParseError,
};
pub use serialize::{format_real, quantize, serialize_facts};
pub use vocab::{
    Action, Attribute, Category, NavCommand, RelativePos, RuleType, Slot, SpeedSymbol,
    SpeedTargets, Symbol,
};

/// Every accepted (Action, TargetSpeed, Nav) combination.
pub fn decision_space() -> Vec<(Action, SpeedSymbol, NavCommand)> {
    let mut out = Vec::with_capacity(Action::ALL.len() * SpeedSymbol::ALL.len() * NavCommand::ALL.len());
    for &a in Action::ALL {
        for &s in SpeedSymbol::ALL {
            for &n in NavCommand::ALL {
                out.push((a, s, n));
            }
        }
    }
    out
}
