//! Training behaviour on scenario suites: physics-stage descent and the
//! effect of the conditioned stage on yielding.

use nsplan_core::conditioning::{train, Model, ModelConfig, TrainConfig};
use nsplan_core::harness::{training_samples, Ablation, Planner, ScenarioSpec, Suite, Template};
use nsplan_core::kbm::KbmParams;
use nsplan_core::predicate::{Action, SpeedSymbol};
use nsplan_core::rules::{ArbitrationConfig, TemplateGenerator};

fn suite(template: Template, seeds: std::ops::Range<u64>) -> Suite {
    Suite::new(template.name(), seeds.map(|s| ScenarioSpec::new(template, s)).collect()).unwrap()
}

#[test]
fn physics_stage_on_empty_road_strictly_decreases_imitation_loss() {
    let kbm = KbmParams::default();
    let scns = suite(Template::EmptyRoad, 0..10).build(&kbm).unwrap();
    let samples = training_samples(&scns, &TemplateGenerator, &ArbitrationConfig::default()).unwrap();
    let mut model = Model::new(ModelConfig::default(), kbm).unwrap();
    // One full batch per step, so consecutive losses are on the same data.
    let cfg = TrainConfig {
        batch_size: samples.len(),
        stage1_epochs: 10,
        stage2_epochs: 0,
        ..Default::default()
    };
    let log = train(&mut model, &samples, &cfg).unwrap();
    let losses: Vec<f64> = log.steps.iter().map(|s| s.loss.imitation_l2).collect();
    assert_eq!(losses.len(), 10);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "imitation loss not strictly decreasing: {losses:?}");
    }
}

/// Share of yield-at-zero frames whose plan ends at or below 0.5 m/s, and
/// the number of such frames.
fn yield_compliance(model: &Model, suite: &Suite) -> (f64, usize) {
    let scns = suite.build(model.kbm()).unwrap();
    let planner = Planner::new(model, &TemplateGenerator, ArbitrationConfig::default(), Ablation::None);
    let (mut frames, mut compliant) = (0, 0);
    for scn in &scns {
        for t in planner.run_scenario(scn).unwrap().traces {
            let d = &t.reasoning.decision;
            if d.action == Action::Yield && d.speed == SpeedSymbol::Zero {
                frames += 1;
                compliant += (t.plan.final_trajectory.waypoints.last().unwrap().v <= 0.5) as usize;
            }
        }
    }
    (compliant as f64 / frames.max(1) as f64, frames)
}

#[test]
fn conditioned_stage_improves_yield_compliance() {
    let kbm = KbmParams::default();
    let arb = ArbitrationConfig::default();
    let scns = Suite::builtin("training").unwrap().build(&kbm).unwrap();
    let samples = training_samples(&scns, &TemplateGenerator, &arb).unwrap();
    let full = TrainConfig::default();
    let mut model = Model::new(ModelConfig::default(), kbm).unwrap();
    train(&mut model, &samples, &TrainConfig { stage2_epochs: 0, ..full.clone() }).unwrap();
    let eval = suite(Template::PedestrianCrossing, 5000..5025);
    let (before, frames) = yield_compliance(&model, &eval);
    train(&mut model, &samples, &TrainConfig { stage1_epochs: 0, ..full }).unwrap();
    let (after, _) = yield_compliance(&model, &eval);
    println!("yield compliance over {frames} frames: physics stage {before:.3}, conditioned stage {after:.3}");
    assert!(frames > 0);
    assert!(after > before, "physics stage {before}, conditioned stage {after}");
}
