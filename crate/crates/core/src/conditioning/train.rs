use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kbm::rollout_with_gradients;
use crate::predicate::{EgoFacts, FinalDecision, Symbol};

use super::loss::{
    action_classification_loss, anisotropic_residual_grad, anisotropic_residual_loss, control_smoothing_grad,
    control_smoothing_loss, cross_entropy_grad, imitation_l2, LossReport, LossWeights,
};
use super::model::{ActionHead, Model, Params};
use super::ConditioningError;

/// One supervised frame: ego state, the decision made for it, and the
/// expert's future positions in the ego planning frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub ego: EgoFacts,
    pub decision: FinalDecision,
    pub expert: Vec<[f64; 2]>,
}

/// Training stage. `Physics` plans with the decision bypassed (no offset,
/// no velocity bias, no classification term); `Conditioned` enables both
/// decision paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Physics,
    Conditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Shuffle seed.
    pub seed: u64,
    pub loss: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            stage1_epochs: 30,
            stage2_epochs: 40,
            seed: 11,
            loss: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConditioningError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ConditioningError::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ConditioningError::InvalidConfig("batch_size must be > 0".into()));
        }
        let w = &self.loss;
        let all = [w.imitation, w.anisotropic_w_y, w.smoothing, w.classification, w.mode_selection];
        if all.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(ConditioningError::InvalidConfig("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Loss and, when `grad` is given, its gradient accumulated into `grad`.
///
/// Winner-takes-all within the route group: imitation, residual and
/// smoothing terms apply to the mode whose final trajectory is closest to
/// the expert, and the score head is trained toward that mode.
#[allow(clippy::needless_range_loop)]
fn evaluate(
    model: &Model,
    sample: &TrainingSample,
    stage: Stage,
    w: &LossWeights,
    grad: Option<&mut Params>,
) -> Result<LossReport, ConditioningError> {
    let kbm = model.kbm();
    let h = kbm.horizon;
    if sample.expert.len() != h {
        return Err(ConditioningError::shape("expert horizon", h, sample.expert.len()));
    }
    let bypass = stage == Stage::Physics;
    let g = model.forward_group(&sample.ego, &sample.decision, bypass);
    let start = g.start();
    let lambda = kbm.residual_scale;

    let mut rolled = Vec::with_capacity(g.modes.len());
    for m in &g.modes {
        let (traj, jac) = rollout_with_gradients(&start, &m.controls, kbm)?;
        let fin: Vec<[f64; 2]> = traj
            .waypoints
            .iter()
            .zip(&m.out.residual)
            .map(|(p, [rx, ry])| [p.x + lambda * rx.tanh(), p.y + lambda * ry.tanh()])
            .collect();
        let imit = imitation_l2(&fin, &sample.expert);
        rolled.push((jac, fin, imit));
    }
    let mut win = 0;
    for (i, r) in rolled.iter().enumerate() {
        if r.2 < rolled[win].2 {
            win = i;
        }
    }
    let wm = &g.modes[win];
    let scores: Vec<f64> = g.modes.iter().map(|m| m.out.score).collect();
    let pooled = model.pooled(&g.base, &g.offset);
    let logits = model.params().action_head.logits(&pooled);
    let action = sample.decision.action.index();

    let report = LossReport {
        imitation_l2: rolled[win].2,
        anisotropic_residual: anisotropic_residual_loss(&wm.out.residual, w.anisotropic_w_y),
        control_smoothing: control_smoothing_loss(&wm.controls),
        action_classification: if bypass { 0.0 } else { action_classification_loss(&logits, action) },
        mode_selection: action_classification_loss(&scores, win),
        total: 0.0,
    }
    .finish(w);

    let Some(grad) = grad else {
        return Ok(report);
    };

    let params = model.params();
    let head = &params.head;
    let mut d_out = vec![vec![0.0; head.outputs]; g.modes.len()];
    for (i, s) in cross_entropy_grad(&scores, win).into_iter().enumerate() {
        d_out[i][4 * h] = w.mode_selection * s;
    }

    // Winner: imitation through the residual and the rollout.
    let (jac, fin, _) = &rolled[win];
    let d_pos: Vec<(f64, f64)> = fin
        .iter()
        .zip(&sample.expert)
        .map(|(f, e)| {
            let c = w.imitation * 2.0 / h as f64;
            (c * (f[0] - e[0]), c * (f[1] - e[1]))
        })
        .collect();
    let aniso = anisotropic_residual_grad(&wm.out.residual, w.anisotropic_w_y);
    let dw = &mut d_out[win];
    for k in 0..h {
        let [rx, ry] = wm.out.residual[k];
        dw[2 * h + k] = d_pos[k].0 * lambda * (1.0 - rx.tanh().powi(2)) + aniso[k][0];
        dw[3 * h + k] = d_pos[k].1 * lambda * (1.0 - ry.tanh().powi(2)) + aniso[k][1];
    }
    let d_params = jac.vjp(&d_pos);
    let smooth = control_smoothing_grad(&wm.controls);
    for j in 0..h {
        let ta = wm.out.raw_accel[j].tanh();
        let td = wm.out.raw_steer[j].tanh();
        dw[j] = (d_params[j] + w.smoothing * smooth[j][0]) * kbm.accel_max * (1.0 - ta * ta);
        dw[h + j] = (d_params[h + j] + w.smoothing * smooth[j][1]) * kbm.steer_max * (1.0 - td * td);
    }
    grad.g_scale += d_params[2 * h] * g.dv0_dbv * g.dbv_dg;

    // Head backprop for every mode in the group.
    let mut d_offset = vec![0.0; g.base.len()];
    let (si, sh) = (head.input_scale(), head.hidden_scale());
    for (m, go) in g.modes.iter().zip(&d_out) {
        let mut dh = vec![0.0; head.hidden];
        for (o, &gv) in go.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let gv = gv * head.output_gain(o);
            grad.head.b2[o] += gv;
            let row = o * head.hidden;
            for j in 0..head.hidden {
                grad.head.w2[row + j] += gv * sh * m.hidden[j];
                dh[j] += gv * sh * head.w2[row + j];
            }
        }
        for j in 0..head.hidden {
            let dz = dh[j] * (1.0 - m.hidden[j] * m.hidden[j]);
            if dz == 0.0 {
                continue;
            }
            grad.head.b1[j] += dz;
            let row = j * head.dim;
            for i in 0..head.dim {
                grad.head.w1[row + i] += dz * si * m.query[i];
                d_offset[i] += dz * si * head.w1[row + i];
            }
        }
    }

    if !bypass {
        let ah = &params.action_head;
        let dim = pooled.len();
        let sa = ActionHead::input_scale(dim);
        for (c, gl) in cross_entropy_grad(&logits, action).into_iter().enumerate() {
            let gl = w.classification * gl * ActionHead::gain();
            grad.action_head.b[c] += gl;
            for i in 0..dim {
                grad.action_head.w[c * dim + i] += gl * sa * pooled[i];
                d_offset[i] += gl * sa * ah.w[c * dim + i];
            }
        }
        let dim = params.tables.dim;
        let a = sample.decision.action.index() * dim;
        let s = sample.decision.speed.index() * dim;
        for i in 0..dim {
            grad.tables.action[a + i] += d_offset[i];
            grad.tables.speed[s + i] += d_offset[i];
        }
    }
    Ok(report)
}

pub fn sample_loss(model: &Model, sample: &TrainingSample, stage: Stage, w: &LossWeights) -> Result<LossReport, ConditioningError> {
    evaluate(model, sample, stage, w, None)
}

/// Loss and its exact gradient with respect to every trainable scalar.
pub fn sample_gradient(
    model: &Model,
    sample: &TrainingSample,
    stage: Stage,
    w: &LossWeights,
) -> Result<(LossReport, Params), ConditioningError> {
    let mut grad = Params::zeros(model.config(), model.kbm());
    let report = evaluate(model, sample, stage, w, Some(&mut grad))?;
    Ok((report, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub step: usize,
    /// Batch-mean losses before the update.
    pub loss: LossReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "stage,epoch,step,total,imitation_l2,anisotropic_residual,control_smoothing,action_classification,mode_selection\n",
        );
        for r in &self.steps {
            let l = &r.loss;
            let stage = match r.stage {
                Stage::Physics => 1,
                Stage::Conditioned => 2,
            };
            let _ = writeln!(
                out,
                "{stage},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.step,
                l.total,
                l.imitation_l2,
                l.anisotropic_residual,
                l.control_smoothing,
                l.action_classification,
                l.mode_selection
            );
        }
        out
    }
}

/// Two-stage mini-batch gradient descent with a fixed step size.
///
/// Batches are visited in a seeded shuffle and gradients are summed in
/// sample order, so a run is bit-reproducible.
pub fn train(model: &mut Model, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainLog, ConditioningError> {
    cfg.validate()?;
    let mut log = TrainLog::default();
    if samples.is_empty() {
        return Ok(log);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = 0;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = Params::zeros(model.config(), model.kbm());
    for (stage, epochs) in [(Stage::Physics, cfg.stage1_epochs), (Stage::Conditioned, cfg.stage2_epochs)] {
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                grad.clear();
                let mut report = LossReport::default();
                for &i in batch {
                    let r = evaluate(model, &samples[i], stage, &cfg.loss, Some(&mut grad))?;
                    report.accumulate(&r);
                }
                let n = batch.len() as f64;
                report.scale(1.0 / n);
                if !report.total.is_finite() || !grad.is_finite() {
                    return Err(ConditioningError::Divergence { step, loss: report.total });
                }
                model.params_mut().axpy(-cfg.learning_rate / n, &grad);
                log.steps.push(StepRecord {
                    stage,
                    epoch,
                    step,
                    loss: report,
                });
                step += 1;
            }
        }
    }
    Ok(log)
}
