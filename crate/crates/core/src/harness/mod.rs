//! Synthetic scenarios, open-loop evaluation and reasoning traces.
//!
//! Each [`Scenario`] carries scripted agents and a kinematically feasible
//! expert log. Frames are evaluated open loop: the ego pose at every frame
//! is the logged expert pose, and each frame's plan is scored against the
//! expert's next `H` waypoints.

mod geometry;
mod metrics;
mod pipeline;
mod render;
mod scenario;
mod suite;
mod world;

use thiserror::Error;

pub use geometry::{OrientedBox, Pose};
pub use metrics::{
    collision_metric, l2_metric, metrics_csv, to_world, tpc_metric, HorizonMetrics, MetricsAccumulator,
    MetricsReport, TpcAccumulator, WorldPlan, HORIZONS_S, METRICS_HEADER,
};
pub use pipeline::{
    ablated_decision, evaluate, frame_facts, read_traces, replay_frame, replay_traces, training_samples, Ablation,
    Evaluation, FrameTrace, Planner, ScenarioResult,
};
pub use render::{find_frame, render_frame};
pub use scenario::{
    build_scenario, Agent, Scenario, ScenarioSpec, Template, DEFAULT_FRAMES, EGO_LENGTH, EGO_WIDTH, LANE_WIDTH, ROAD_SPEED_LIMIT,
};
pub use suite::{Batch, Suite, BUILTIN_SUITES};
pub use world::{extract_facts, sweep_ttc, MIN_TTC_S, TTC_HORIZON_S};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown scenario template {0:?}")]
    UnknownTemplate(String),
    #[error("scenario {scenario}: {reason}")]
    InvalidParam { scenario: String, reason: String },
    #[error("scenario {scenario}: expert log is infeasible: {reason}")]
    InfeasibleExpert { scenario: String, reason: String },
    #[error("plan has {found} waypoints, expert has {expected}")]
    HorizonMismatch { expected: usize, found: usize },
    #[error("waypoint times differ: plan {pred} s, expert {expert} s")]
    TimeMismatch { pred: f64, expert: f64 },
    #[error("consistency needs at least 2 frames, got {0}")]
    InsufficientFrames(usize),
    #[error("scenario {scenario} has {frames} frames; frame {frame} requested")]
    FrameOutOfRange { scenario: String, frame: usize, frames: usize },
    #[error("frame {frame}: facts did not round-trip: {reason}")]
    Facts { frame: String, reason: String },
    #[error("frame {frame}: planning failed: {reason}")]
    Planning { frame: String, reason: String },
    #[error("suite: {0}")]
    Suite(String),
    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },
    #[error("frame {frame} not in trace (frames present: {available:?})")]
    FrameNotFound { frame: usize, available: Vec<usize> },
}
