//! Per-frame planning pipeline, suite evaluation and trace replay.
//!
//! A frame runs facts -> predicate text -> parsed facts -> decision -> plan.
//! Everything downstream of the text sees only the parsed (quantized) facts,
//! so a [`FrameTrace`] carries all inputs needed to reproduce the frame
//! bit for bit.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conditioning::{LossWeights, Model, PlanOptions, PlanOutput, TrainingSample};
use crate::kbm::Trajectory;
use crate::predicate::{parse_facts, serialize_facts, Action, FinalDecision, RuleType, SceneFacts, SpeedSymbol};
use crate::rules::{
    apply_axioms, decide, ArbitrationConfig, DecisionTrace, GeneratorError, GeneratorOutput, RuleGenerator,
};

use super::geometry::Pose;
use super::metrics::{l2_metric, metrics_csv, to_world, HorizonMetrics, MetricsAccumulator, MetricsReport, WorldPlan};
use super::scenario::{build_scenario, Scenario, ScenarioSpec};
use super::world::extract_facts;
use super::HarnessError;

/// Component switched off for an ablation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    /// No rule reasoning: every frame plans under `keep_lane` at `current`.
    NoAsp,
    /// Final trajectory is the physics rollout alone.
    NoKbmResidual,
    /// Trained without the control smoothing term.
    NoSmoothing,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::None, Ablation::NoAsp, Ablation::NoKbmResidual, Ablation::NoSmoothing];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoAsp => "no-asp",
            Ablation::NoKbmResidual => "no-kbm-residual",
            Ablation::NoSmoothing => "no-smoothing",
        }
    }

    /// Training loss weights under this ablation.
    pub fn loss_weights(self, base: LossWeights) -> LossWeights {
        match self {
            Ablation::NoSmoothing => LossWeights { smoothing: 0.0, ..base },
            _ => base,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown ablation {s:?}; expected one of none, no-asp, no-kbm-residual, no-smoothing"))
    }
}

/// Decision used for every frame when rule reasoning is ablated.
pub fn ablated_decision() -> FinalDecision {
    FinalDecision {
        action: Action::KeepLane,
        speed: SpeedSymbol::Current,
        tier: RuleType::Efficiency,
        winning_suggestion: "ablation:no-asp".into(),
    }
}

/// Everything recorded for one planned frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub scenario_id: String,
    pub scenario: ScenarioSpec,
    pub frame: usize,
    pub t: f64,
    pub ablation: Ablation,
    pub arbitration: ArbitrationConfig,
    /// SHA-256 of the weights checkpoint.
    pub weights: String,
    /// Logged expert pose the plan starts from, world frame.
    pub ego_pose: Pose,
    /// Predicate text handed to the rule layer.
    pub facts: String,
    pub reasoning: DecisionTrace,
    pub plan: PlanOutput,
    /// Final trajectory in world coordinates with absolute times.
    pub world_trajectory: Trajectory,
    pub l2: HorizonMetrics,
    /// Time and agent of the first overlap along the plan, if any.
    pub collision: Option<(f64, u32)>,
}

impl FrameTrace {
    pub fn frame_key(&self) -> String {
        format!("{}#{}", self.scenario_id, self.frame)
    }

    pub fn collided(&self) -> bool {
        self.collision.is_some()
    }
}

/// Facts for a frame after the text round trip, plus the text itself.
pub fn frame_facts(scn: &Scenario, frame: usize) -> Result<(String, SceneFacts), HarnessError> {
    if frame >= scn.frames {
        return Err(HarnessError::FrameOutOfRange {
            scenario: scn.id.clone(),
            frame,
            frames: scn.frames,
        });
    }
    let text = serialize_facts(&extract_facts(scn, frame));
    let parsed = parse_facts(&text).map_err(|e| HarnessError::Facts {
        frame: format!("{}#{frame}", scn.id),
        reason: e.to_string(),
    })?;
    Ok((text, parsed))
}

/// Model, rule generator and switches for one run.
pub struct Planner<'a> {
    model: &'a Model,
    generator: &'a dyn RuleGenerator,
    arbitration: ArbitrationConfig,
    ablation: Ablation,
    weights: String,
}

impl<'a> Planner<'a> {
    pub fn new(model: &'a Model, generator: &'a dyn RuleGenerator, arbitration: ArbitrationConfig, ablation: Ablation) -> Self {
        Planner {
            model,
            generator,
            arbitration,
            ablation,
            weights: model.fingerprint(),
        }
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }

    pub fn weights(&self) -> &str {
        &self.weights
    }

    fn reason(&self, facts: &SceneFacts) -> DecisionTrace {
        if self.ablation == Ablation::NoAsp {
            return DecisionTrace {
                generator: "none".into(),
                suggestions: Vec::new(),
                rejected: Vec::new(),
                generator_error: None,
                decision: ablated_decision(),
            };
        }
        decide(facts, self.generator, &self.arbitration).1
    }

    pub fn run_frame(&self, scn: &Scenario, frame: usize) -> Result<FrameTrace, HarnessError> {
        let (text, facts) = frame_facts(scn, frame)?;
        let reasoning = self.reason(&facts);
        let opts = PlanOptions {
            bypass_decision: false,
            zero_residual: self.ablation == Ablation::NoKbmResidual,
        };
        let plan = self
            .model
            .plan(&facts.ego, &reasoning.decision, opts)
            .map_err(|e| HarnessError::Planning {
                frame: format!("{}#{frame}", scn.id),
                reason: e.to_string(),
            })?;
        let world_trajectory = to_world(scn, frame, &plan.final_trajectory);
        let l2 = l2_metric(&plan.final_trajectory, &scn.expert_local(frame))?;
        let collision = scn.first_collision(&world_trajectory);
        Ok(FrameTrace {
            scenario_id: scn.id.clone(),
            scenario: scn.spec.clone(),
            frame,
            t: scn.frame_time(frame),
            ablation: self.ablation,
            arbitration: self.arbitration,
            weights: self.weights.clone(),
            ego_pose: scn.ego_pose(frame),
            facts: text,
            reasoning,
            plan,
            world_trajectory,
            l2,
            collision,
        })
    }

    /// Every frame of one scenario with its metrics.
    pub fn run_scenario(&self, scn: &Scenario) -> Result<ScenarioResult, HarnessError> {
        if scn.frames < 2 {
            return Err(HarnessError::InsufficientFrames(scn.frames));
        }
        let traces = (0..scn.frames).map(|f| self.run_frame(scn, f)).collect::<Result<Vec<_>, _>>()?;
        let mut acc = MetricsAccumulator::default();
        for t in &traces {
            acc.add_frame(&t.l2, t.collided());
        }
        for w in traces.windows(2) {
            acc.add_pair(&world_plan(&w[0]), &world_plan(&w[1]));
        }
        Ok(ScenarioResult {
            id: scn.id.clone(),
            accumulator: acc,
            traces,
        })
    }
}

fn world_plan(t: &FrameTrace) -> WorldPlan {
    WorldPlan {
        t0: t.t,
        trajectory: t.world_trajectory.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub id: String,
    pub accumulator: MetricsAccumulator,
    pub traces: Vec<FrameTrace>,
}

impl ScenarioResult {
    pub fn report(&self) -> MetricsReport {
        self.accumulator.report()
    }

    pub fn traces_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.traces {
            out.push_str(&serde_json::to_string(t).expect("traces contain only finite numbers"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scenarios: Vec<ScenarioResult>,
    pub aggregate: MetricsReport,
}

impl Evaluation {
    pub fn metrics_csv(&self) -> String {
        let rows: Vec<_> = self.scenarios.iter().map(|s| (s.id.clone(), s.report())).collect();
        metrics_csv(&rows, &self.aggregate)
    }

    pub fn traces(&self) -> impl Iterator<Item = &FrameTrace> {
        self.scenarios.iter().flat_map(|s| &s.traces)
    }

    /// `metrics.csv` plus one `traces/<scenario>.jsonl` per scenario.
    pub fn write(&self, out: &Path) -> io::Result<()> {
        fs::create_dir_all(out.join("traces"))?;
        fs::write(out.join("metrics.csv"), self.metrics_csv())?;
        for s in &self.scenarios {
            fs::write(out.join("traces").join(format!("{}.jsonl", s.id)), s.traces_jsonl())?;
        }
        Ok(())
    }
}

pub fn evaluate(scenarios: &[Scenario], planner: &Planner) -> Result<Evaluation, HarnessError> {
    let results = scenarios.iter().map(|s| planner.run_scenario(s)).collect::<Result<Vec<_>, _>>()?;
    let mut total = MetricsAccumulator::default();
    for r in &results {
        total.merge(&r.accumulator);
    }
    Ok(Evaluation {
        scenarios: results,
        aggregate: total.report(),
    })
}

/// One training sample per frame, with the decision the pipeline would
/// reach on that frame and the expert's next `H` positions.
pub fn training_samples(
    scenarios: &[Scenario],
    generator: &dyn RuleGenerator,
    arbitration: &ArbitrationConfig,
) -> Result<Vec<TrainingSample>, HarnessError> {
    let mut out = Vec::new();
    for scn in scenarios {
        for frame in 0..scn.frames {
            let (_, facts) = frame_facts(scn, frame)?;
            let (decision, _) = decide(&facts, generator, arbitration);
            let expert = scn.expert_local(frame).positions().map(|(x, y)| [x, y]).collect();
            out.push(TrainingSample {
                ego: facts.ego,
                decision,
                expert,
            });
        }
    }
    Ok(out)
}

/// Generator that returns what a trace recorded from the original one.
struct RecordedGenerator {
    id: String,
    output: Result<GeneratorOutput, String>,
}

impl RecordedGenerator {
    fn from_trace(trace: &FrameTrace, facts: &SceneFacts) -> Self {
        let r = &trace.reasoning;
        let output = match &r.generator_error {
            Some(e) => Err(e.clone()),
            None => {
                let first = apply_axioms(facts, &trace.arbitration).len().min(r.suggestions.len());
                let last = r.suggestions.len().saturating_sub(1).max(first);
                Ok(GeneratorOutput {
                    suggestions: r.suggestions[first..last].to_vec(),
                    rejected: r.rejected.clone(),
                })
            }
        };
        RecordedGenerator {
            id: r.generator.clone(),
            output,
        }
    }
}

impl RuleGenerator for RecordedGenerator {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn generate(&self, _: &SceneFacts) -> Result<GeneratorOutput, GeneratorError> {
        self.output.clone().map_err(GeneratorError::Recorded)
    }
}

fn diff_values(path: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let keys: std::collections::BTreeSet<_> = x.keys().chain(y.keys()).collect();
            for k in keys {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                diff_values(&p, x.get(k).unwrap_or(&Value::Null), y.get(k).unwrap_or(&Value::Null), out);
            }
        }
        _ if a != b => out.push(format!("{path}: recorded {a}, replayed {b}")),
        _ => {}
    }
}

/// Re-run a recorded frame from its scenario spec, facts, generator output
/// and the given weights. Returns one line per differing field; empty means
/// the replay is bit-identical.
pub fn replay_frame(trace: &FrameTrace, model: &Model) -> Result<Vec<String>, HarnessError> {
    let scn = build_scenario(&trace.scenario, model.kbm())?;
    let facts = parse_facts(&trace.facts).map_err(|e| HarnessError::Facts {
        frame: trace.frame_key(),
        reason: e.to_string(),
    })?;
    let generator = RecordedGenerator::from_trace(trace, &facts);
    let planner = Planner::new(model, &generator, trace.arbitration, trace.ablation);
    let fresh = planner.run_frame(&scn, trace.frame)?;
    let mut diffs = Vec::new();
    let recorded = serde_json::to_value(trace).expect("trace serializes");
    let replayed = serde_json::to_value(&fresh).expect("trace serializes");
    diff_values("", &recorded, &replayed, &mut diffs);
    Ok(diffs.into_iter().map(|d| format!("{}: {d}", trace.frame_key())).collect())
}

/// Parse a JSONL trace file.
pub fn read_traces(text: &str) -> Result<Vec<FrameTrace>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| HarnessError::Trace { line: i + 1, reason: e.to_string() }))
        .collect()
}

/// Replay every frame of a JSONL trace file.
pub fn replay_traces(text: &str, model: &Model) -> Result<Vec<String>, HarnessError> {
    let mut diffs = Vec::new();
    for t in read_traces(text)? {
        diffs.extend(replay_frame(&t, model)?);
    }
    Ok(diffs)
}
