//! End-to-end behaviour checks on a trained planner, shared by the
//! `check` command and the acceptance suite.

use crate::conditioning::Model;
use crate::harness::{evaluate, render_frame, replay_traces, Ablation, HarnessError, Planner, ScenarioSpec, Suite};
use crate::predicate::{Action, SpeedSymbol};
use crate::rules::{ArbitrationConfig, RuleGenerator};

/// Range the case-study velocity bias magnitude must fall in, m/s.
pub const CASE_STUDY_BIAS: (f64, f64) = (1.5, 2.5);
/// Largest terminal speed of the case-study plan, m/s.
pub const CASE_STUDY_TERMINAL_SPEED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// The pedestrian yielding scene: decision, velocity bias, a decelerating
/// final plan that ends near standstill, no collision on any frame, and a
/// three-layer rendering.
pub fn case_study(model: &Model, generator: &dyn RuleGenerator, arb: ArbitrationConfig) -> Result<CheckResult, HarnessError> {
    let scn = crate::harness::build_scenario(&ScenarioSpec::case_study(), model.kbm())?;
    let planner = Planner::new(model, generator, arb, Ablation::None);
    let result = planner.run_scenario(&scn)?;
    let first = &result.traces[0];
    let d = &first.reasoning.decision;
    let plan = &first.plan;
    // Planned vehicle speed; the residual displaces positions only.
    let speeds: Vec<f64> = std::iter::once(plan.start.v)
        .chain(plan.final_trajectory.waypoints.iter().map(|w| w.v))
        .collect();
    let terminal = *speeds.last().unwrap();
    let monotone = speeds.windows(2).all(|w| w[1] <= w[0]);
    let decision_ok = d.action == Action::Yield && d.speed == SpeedSymbol::Zero;
    let bias_ok = plan.b_v < 0.0 && (CASE_STUDY_BIAS.0..=CASE_STUDY_BIAS.1).contains(&plan.b_v.abs());
    let collisions = result.traces.iter().filter(|t| t.collided()).count();
    let text = render_frame(first);
    let layers = ["[1] facts", "[2] suggestions", "[3] conditioning"].iter().all(|h| text.contains(h));
    let passed = decision_ok && bias_ok && monotone && terminal <= CASE_STUDY_TERMINAL_SPEED && collisions == 0 && layers;
    Ok(CheckResult {
        name: "case study".into(),
        passed,
        detail: format!(
            "decision ({}, {}), b_v {:.3}, speeds {}, monotone {monotone}, terminal {terminal:.3}, collisions {collisions}/{}, three layers {layers}",
            d.action,
            d.speed,
            plan.b_v,
            speeds.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" "),
            result.traces.len()
        ),
    })
}

/// Collision counts for the full pipeline against the same planner with
/// rule reasoning removed.
pub fn causality(
    model: &Model,
    generator: &dyn RuleGenerator,
    arb: ArbitrationConfig,
    suite: &Suite,
) -> Result<CheckResult, HarnessError> {
    let scns = suite.build(model.kbm())?;
    let full = evaluate(&scns, &Planner::new(model, generator, arb, Ablation::None))?;
    let ablated = evaluate(&scns, &Planner::new(model, generator, arb, Ablation::NoAsp))?;
    let hit = |e: &crate::harness::Evaluation| e.scenarios.iter().filter(|s| s.report().collisions > 0).count();
    let (fr, ar) = (full.aggregate.collision_rate, ablated.aggregate.collision_rate);
    let ablated_scenarios = hit(&ablated);
    Ok(CheckResult {
        name: "rule reasoning reduces collisions".into(),
        passed: fr < ar && ablated_scenarios >= 1,
        detail: format!(
            "{} scenarios: full rate {fr:.4} ({} scenarios collide), no-asp rate {ar:.4} ({ablated_scenarios} scenarios collide)",
            scns.len(),
            hit(&full)
        ),
    })
}

/// Two evaluations produce identical bytes and every recorded frame
/// replays with an empty diff.
pub fn determinism(
    model: &Model,
    generator: &dyn RuleGenerator,
    arb: ArbitrationConfig,
    suite: &Suite,
) -> Result<CheckResult, HarnessError> {
    let scns = suite.build(model.kbm())?;
    let planner = Planner::new(model, generator, arb, Ablation::None);
    let a = evaluate(&scns, &planner)?;
    let b = evaluate(&scns, &planner)?;
    let same_metrics = a.metrics_csv() == b.metrics_csv();
    let same_traces = a.scenarios.iter().zip(&b.scenarios).all(|(x, y)| x.traces_jsonl() == y.traces_jsonl());
    let mut diffs = Vec::new();
    for s in &a.scenarios {
        diffs.extend(replay_traces(&s.traces_jsonl(), model)?);
    }
    let frames: usize = a.scenarios.iter().map(|s| s.traces.len()).sum();
    Ok(CheckResult {
        name: "determinism and replay".into(),
        passed: same_metrics && same_traces && diffs.is_empty(),
        detail: format!(
            "metrics identical {same_metrics}, traces identical {same_traces}, {frames} frames replayed, {} differing fields{}",
            diffs.len(),
            diffs.first().map(|d| format!(" (first: {d})")).unwrap_or_default()
        ),
    })
}
