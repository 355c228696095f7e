use std::cmp::Ordering;

use crate::predicate::{FinalDecision, Suggestion, Symbol};

use super::{ArbitrationConfig, RuleError};

/// Total order over suggestions; the minimum wins.
///
/// Tier first, then the within-tier tie-break: lower resolved target speed,
/// more severe action, lexicographic provenance. The trailing symbol
/// indices only separate suggestions that resolve to the same speed
/// (`current` vs a fixed level) so the order stays total.
pub fn compare(a: &Suggestion, b: &Suggestion, current_speed: f64, cfg: &ArbitrationConfig) -> Ordering {
    let speed = |s: &Suggestion| cfg.speed_targets.resolve(s.speed, current_speed);
    a.rule_type
        .rank()
        .cmp(&b.rule_type.rank())
        .then_with(|| speed(a).total_cmp(&speed(b)))
        .then_with(|| b.action.severity().cmp(&a.action.severity()))
        .then_with(|| a.provenance.cmp(&b.provenance))
        .then_with(|| a.speed.index().cmp(&b.speed.index()))
        .then_with(|| a.action.index().cmp(&b.action.index()))
}

/// Pick the unique winning suggestion.
///
/// The result depends only on the multiset of inputs: it is invariant under
/// permutation and duplication.
pub fn arbitrate(
    suggestions: &[Suggestion],
    current_speed: f64,
    cfg: &ArbitrationConfig,
) -> Result<FinalDecision, RuleError> {
    suggestions
        .iter()
        .min_by(|a, b| compare(a, b, current_speed, cfg))
        .map(FinalDecision::from_suggestion)
        .ok_or(RuleError::EmptyInput)
}
