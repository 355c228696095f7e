use serde::{Deserialize, Serialize};

use crate::kbm::ControlStep;

/// Weights of the training objective. The anisotropic term carries its own
/// weight `w_y`; the lateral weight is `10 * w_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub imitation: f64,
    pub anisotropic_w_y: f64,
    pub smoothing: f64,
    pub classification: f64,
    /// Cross-entropy pulling the score head toward the best-fitting mode.
    pub mode_selection: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            imitation: 1.0,
            anisotropic_w_y: 0.1,
            smoothing: 0.05,
            classification: 0.1,
            mode_selection: 1.0,
        }
    }
}

/// Per-sample (or batch-mean) loss components. Components are unweighted
/// except `anisotropic_residual`, which includes `w_y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub imitation_l2: f64,
    pub anisotropic_residual: f64,
    pub control_smoothing: f64,
    pub action_classification: f64,
    pub mode_selection: f64,
    pub total: f64,
}

impl LossReport {
    pub(crate) fn finish(mut self, w: &LossWeights) -> Self {
        self.total = w.imitation * self.imitation_l2
            + self.anisotropic_residual
            + w.smoothing * self.control_smoothing
            + w.classification * self.action_classification
            + w.mode_selection * self.mode_selection;
        self
    }

    pub(crate) fn accumulate(&mut self, o: &LossReport) {
        self.imitation_l2 += o.imitation_l2;
        self.anisotropic_residual += o.anisotropic_residual;
        self.control_smoothing += o.control_smoothing;
        self.action_classification += o.action_classification;
        self.mode_selection += o.mode_selection;
        self.total += o.total;
    }

    pub(crate) fn scale(&mut self, f: f64) {
        self.imitation_l2 *= f;
        self.anisotropic_residual *= f;
        self.control_smoothing *= f;
        self.action_classification *= f;
        self.mode_selection *= f;
        self.total *= f;
    }
}

/// `sum_k 10 w_y r_x[k]^2 + w_y r_y[k]^2` over raw residuals; x is lateral.
pub fn anisotropic_residual_loss(residual: &[[f64; 2]], w_y: f64) -> f64 {
    residual.iter().map(|[x, y]| 10.0 * w_y * x * x + w_y * y * y).sum()
}

pub(crate) fn anisotropic_residual_grad(residual: &[[f64; 2]], w_y: f64) -> Vec<[f64; 2]> {
    residual.iter().map(|[x, y]| [20.0 * w_y * x, 2.0 * w_y * y]).collect()
}

/// Sum of squared step-to-step changes in acceleration and steering.
pub fn control_smoothing_loss(controls: &[ControlStep]) -> f64 {
    controls
        .windows(2)
        .map(|w| (w[1].accel - w[0].accel).powi(2) + (w[1].steer - w[0].steer).powi(2))
        .sum()
}

/// Gradient with respect to (accel, steer) of each step.
pub(crate) fn control_smoothing_grad(controls: &[ControlStep]) -> Vec<[f64; 2]> {
    let mut g = vec![[0.0; 2]; controls.len()];
    for k in 0..controls.len().saturating_sub(1) {
        let da = 2.0 * (controls[k + 1].accel - controls[k].accel);
        let dd = 2.0 * (controls[k + 1].steer - controls[k].steer);
        g[k][0] -= da;
        g[k + 1][0] += da;
        g[k][1] -= dd;
        g[k + 1][1] += dd;
    }
    g
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Cross-entropy of `logits` against class `target`.
pub fn action_classification_loss(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

pub(crate) fn cross_entropy_grad(logits: &[f64], target: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[target] -= 1.0;
    p
}

/// Mean squared waypoint distance.
pub fn imitation_l2(pred: &[[f64; 2]], expert: &[[f64; 2]]) -> f64 {
    let n = pred.len().min(expert.len());
    if n == 0 {
        return 0.0;
    }
    pred.iter()
        .zip(expert)
        .map(|(p, e)| (p[0] - e[0]).powi(2) + (p[1] - e[1]).powi(2))
        .sum::<f64>()
        / n as f64
}
