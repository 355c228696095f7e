//! Decision conditioning of the trajectory decoder.
//!
//! The final decision enters the planner through two paths: an embedding
//! `d = action_table[a] + speed_table[s]` added to every planning-mode query,
//! and a velocity bias `b_v` on the KBM initial speed. A small head maps each
//! conditioned query to bounded controls, a residual field and a mode score;
//! the KBM rollout plus `lambda * tanh(residual)` is the final trajectory.
//!
//! Scene features stand in for a perception backbone: only ego speed, route
//! command and speed trend reach the query, so everything the planner knows
//! about other agents arrives through the decision.

mod checkpoint;
mod loss;
mod model;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kbm::KbmError;
use crate::predicate::{NavCommand, SpeedTargets, Symbol};

pub use checkpoint::{fingerprint, Checkpoint, CHECKPOINT_FORMAT};
pub use loss::{
    action_classification_loss, anisotropic_residual_loss, control_smoothing_loss, imitation_l2, softmax, LossReport,
    LossWeights,
};
pub use model::{
    combine, condition_query, embed_decision, scene_features, velocity_bias, ActionHead, DecisionTables, Head,
    HeadOutput, Model, Params, PlanOptions, PlanOutput, PlanningQuery, N_FEATURES,
};
pub use train::{
    sample_gradient, sample_loss, train, Stage, StepRecord, TrainConfig, TrainLog, TrainingSample,
};

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("training diverged at step {step}: total loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Kbm(#[from] KbmError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ConditioningError {
    pub(crate) fn shape(what: &str, expected: impl ToString, found: impl ToString) -> Self {
        ConditioningError::ShapeMismatch {
            what: what.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

/// Architecture and fixed conditioning constants. Everything a checkpoint
/// depends on besides its trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Planning modes M; split evenly across the three route commands.
    pub modes: usize,
    /// Query width D.
    pub dim: usize,
    /// Head hidden width.
    pub hidden: usize,
    /// Velocity-bias bound, m/s.
    pub b_max: f64,
    /// Initial velocity-bias gain.
    pub g_scale_init: f64,
    pub speed_targets: SpeedTargets,
    /// Seed for weight initialisation and the fixed scene projection.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            modes: 18,
            dim: 256,
            hidden: 64,
            b_max: 3.0,
            g_scale_init: 0.29,
            speed_targets: SpeedTargets::default(),
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConditioningError> {
        let bad = |m: String| Err(ConditioningError::InvalidConfig(m));
        if self.modes == 0 || !self.modes.is_multiple_of(NavCommand::ALL.len()) {
            return bad(format!("modes ({}) must be a positive multiple of 3", self.modes));
        }
        if self.dim == 0 || self.hidden == 0 {
            return bad("dim and hidden must be > 0".into());
        }
        if !(self.b_max >= 0.0 && self.b_max.is_finite()) {
            return bad("b_max must be >= 0".into());
        }
        if !self.g_scale_init.is_finite() {
            return bad("g_scale_init must be finite".into());
        }
        if !self.speed_targets.is_monotone() {
            return bad("speed targets must increase zero < creep < slow < normal < fast".into());
        }
        Ok(())
    }

    pub fn modes_per_nav(&self) -> usize {
        self.modes / NavCommand::ALL.len()
    }

    /// Modes that may be selected under a route command.
    pub fn nav_modes(&self, nav: NavCommand) -> Range<usize> {
        let k = self.modes_per_nav();
        nav.index() * k..(nav.index() + 1) * k
    }
}
