use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kbm::{rollout, wrap_angle, ControlStep, KbmParams, Trajectory, VehicleState, Waypoint};
use crate::predicate::{Action, EgoFacts, FinalDecision, SpeedSymbol, SpeedTargets, Symbol};

use super::{ConditioningError, ModelConfig};

pub const N_FEATURES: usize = 7;
const SCORE_GAIN: f64 = 50.0;
const LOGIT_GAIN: f64 = 10.0;
const TABLE_INIT_STD: f64 = 0.3;

/// Ego-only scene descriptor: bias, speed/10, (speed/10)^2, route one-hot,
/// and the recent speed trend (clamped change over the last history sample).
pub fn scene_features(ego: &EgoFacts) -> [f64; N_FEATURES] {
    let v = ego.speed / 10.0;
    let trend = ego
        .history_speeds
        .last()
        .map(|prev| ((ego.speed - prev) / 2.0).clamp(-1.0, 1.0))
        .unwrap_or(0.0);
    let mut f = [1.0, v, v * v, 0.0, 0.0, 0.0, trend];
    f[3 + ego.nav.index()] = 1.0;
    f
}

/// Query tensor of shape `batch x 1 x modes x dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningQuery {
    batch: usize,
    modes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PlanningQuery {
    pub fn zeros(batch: usize, modes: usize, dim: usize) -> Self {
        PlanningQuery {
            batch,
            modes,
            dim,
            data: vec![0.0; batch * modes * dim],
        }
    }

    pub fn from_vec(batch: usize, modes: usize, dim: usize, data: Vec<f64>) -> Result<Self, ConditioningError> {
        if data.len() != batch * modes * dim {
            return Err(ConditioningError::shape("planning query", batch * modes * dim, data.len()));
        }
        Ok(PlanningQuery { batch, modes, dim, data })
    }

    /// (B, M, D); the singleton axis is implicit.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.modes, self.dim)
    }

    pub fn row(&self, b: usize, m: usize) -> &[f64] {
        let i = (b * self.modes + m) * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn row_mut(&mut self, b: usize, m: usize) -> &mut [f64] {
        let i = (b * self.modes + m) * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `Q'[b, 0, m, :] = Q[b, 0, m, :] + d`.
pub fn condition_query(q: &PlanningQuery, d: &[f64]) -> Result<PlanningQuery, ConditioningError> {
    if d.len() != q.dim {
        return Err(ConditioningError::shape("decision offset", q.dim, d.len()));
    }
    let mut out = q.clone();
    for row in out.data.chunks_mut(q.dim) {
        row.iter_mut().zip(d).for_each(|(r, d)| *r += d);
    }
    Ok(out)
}

/// Learnable action and speed embedding tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTables {
    pub dim: usize,
    /// `9 x dim`.
    pub action: Vec<f64>,
    /// `6 x dim`.
    pub speed: Vec<f64>,
}

impl DecisionTables {
    pub fn zeros(dim: usize) -> Self {
        DecisionTables {
            dim,
            action: vec![0.0; Action::ALL.len() * dim],
            speed: vec![0.0; SpeedSymbol::ALL.len() * dim],
        }
    }

    pub fn action_row(&self, a: Action) -> &[f64] {
        &self.action[a.index() * self.dim..(a.index() + 1) * self.dim]
    }

    pub fn speed_row(&self, s: SpeedSymbol) -> &[f64] {
        &self.speed[s.index() * self.dim..(s.index() + 1) * self.dim]
    }

    pub fn embed(&self, a: Action, s: SpeedSymbol) -> Vec<f64> {
        self.action_row(a).iter().zip(self.speed_row(s)).map(|(x, y)| x + y).collect()
    }
}

/// `d = action_table[a] + speed_table[s]`.
pub fn embed_decision(dec: &FinalDecision, tables: &DecisionTables) -> Vec<f64> {
    tables.embed(dec.action, dec.speed)
}

/// `clamp(g (target - v0), -b_max, b_max)`; zero for `current`.
pub fn velocity_bias(speed: SpeedSymbol, v0: f64, g_scale: f64, b_max: f64, targets: &SpeedTargets) -> f64 {
    (g_scale * (targets.resolve(speed, v0) - v0)).clamp(-b_max, b_max)
}

/// Two affine layers with a tanh between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub dim: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// `hidden x dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `outputs x hidden`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Head {
    pub fn zeros(dim: usize, hidden: usize, outputs: usize) -> Self {
        Head {
            dim,
            hidden,
            outputs,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; outputs * hidden],
            b2: vec![0.0; outputs],
        }
    }

    /// Fan-in factor applied to the query inside the first layer.
    pub fn input_scale(&self) -> f64 {
        1.0 / (self.dim as f64).sqrt()
    }

    /// Fan-in factor applied to the hidden layer inside the second layer.
    pub fn hidden_scale(&self) -> f64 {
        1.0 / (self.hidden as f64).sqrt()
    }

    /// Fixed multiplier on output `o`. The mode score is amplified so it
    /// learns at a rate comparable to the control outputs under plain
    /// gradient descent.
    pub fn output_gain(&self, o: usize) -> f64 {
        if o + 1 == self.outputs {
            SCORE_GAIN
        } else {
            1.0
        }
    }

    /// Hidden activations and raw outputs for one query row.
    pub fn forward(&self, q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (si, sh) = (self.input_scale(), self.hidden_scale());
        let h: Vec<f64> = self
            .w1
            .chunks(self.dim)
            .zip(&self.b1)
            .map(|(w, b)| (si * dot(w, q) + b).tanh())
            .collect();
        let o = self
            .w2
            .chunks(self.hidden)
            .zip(&self.b2)
            .enumerate()
            .map(|(o, (w, b))| self.output_gain(o) * (sh * dot(w, &h) + b))
            .collect();
        (h, o)
    }
}

/// Raw head outputs for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    pub raw_accel: Vec<f64>,
    pub raw_steer: Vec<f64>,
    /// Unbounded residual per waypoint, (lateral x, longitudinal y).
    pub residual: Vec<[f64; 2]>,
    pub score: f64,
}

impl HeadOutput {
    pub fn from_raw(o: &[f64], horizon: usize) -> Self {
        let h = horizon;
        HeadOutput {
            raw_accel: o[..h].to_vec(),
            raw_steer: o[h..2 * h].to_vec(),
            residual: (0..h).map(|k| [o[2 * h + k], o[3 * h + k]]).collect(),
            score: o[4 * h],
        }
    }

    pub fn controls(&self, p: &KbmParams) -> Vec<ControlStep> {
        self.raw_accel
            .iter()
            .zip(&self.raw_steer)
            .map(|(&a, &d)| ControlStep::from_raw(a, d, p))
            .collect()
    }
}

/// Auxiliary 9-way action classifier on the mode-pooled query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionHead {
    /// `9 x dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ActionHead {
    pub fn zeros(dim: usize) -> Self {
        ActionHead {
            w: vec![0.0; Action::ALL.len() * dim],
            b: vec![0.0; Action::ALL.len()],
        }
    }

    /// Fan-in factor for a pooled query of width `dim`.
    pub fn input_scale(dim: usize) -> f64 {
        1.0 / (dim as f64).sqrt()
    }

    /// Fixed multiplier on every logit, for the same reason as
    /// [`Head::output_gain`].
    pub fn gain() -> f64 {
        LOGIT_GAIN
    }

    pub fn logits(&self, pooled: &[f64]) -> Vec<f64> {
        let s = Self::input_scale(pooled.len());
        self.w
            .chunks(pooled.len())
            .zip(&self.b)
            .map(|(w, b)| Self::gain() * (s * dot(w, pooled) + b))
            .collect()
    }
}

/// Every trainable scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tables: DecisionTables,
    pub head: Head,
    pub action_head: ActionHead,
    pub g_scale: f64,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig, kbm: &KbmParams) -> Self {
        Params {
            tables: DecisionTables::zeros(cfg.dim),
            head: Head::zeros(cfg.dim, cfg.hidden, 4 * kbm.horizon + 1),
            action_head: ActionHead::zeros(cfg.dim),
            g_scale: 0.0,
        }
    }

    fn blocks(&self) -> [&Vec<f64>; 8] {
        [
            &self.tables.action,
            &self.tables.speed,
            &self.head.w1,
            &self.head.b1,
            &self.head.w2,
            &self.head.b2,
            &self.action_head.w,
            &self.action_head.b,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.tables.action,
            &mut self.tables.speed,
            &mut self.head.w1,
            &mut self.head.b1,
            &mut self.head.w2,
            &mut self.head.b2,
            &mut self.action_head.w,
            &mut self.action_head.b,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum::<usize>() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tables, head, action head, then `g_scale` last.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for b in self.blocks() {
            v.extend_from_slice(b);
        }
        v.push(self.g_scale);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), ConditioningError> {
        if flat.len() != self.len() {
            return Err(ConditioningError::shape("flat parameters", self.len(), flat.len()));
        }
        let mut i = 0;
        for b in self.blocks_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        self.g_scale = flat[i];
        Ok(())
    }

    /// `self += f * other`.
    pub fn axpy(&mut self, f: f64, other: &Params) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += f * b);
        }
        self.g_scale += f * other.g_scale;
    }

    pub(crate) fn clear(&mut self) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        self.g_scale = 0.0;
    }

    pub fn is_finite(&self) -> bool {
        self.g_scale.is_finite() && self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub(crate) fn check_shape(&self, cfg: &ModelConfig, kbm: &KbmParams) -> Result<(), ConditioningError> {
        let want = Params::zeros(cfg, kbm);
        let names = ["action table", "speed table", "head w1", "head b1", "head w2", "head b2", "action head w", "action head b"];
        for ((name, got), exp) in names.iter().zip(self.blocks()).zip(want.blocks()) {
            if got.len() != exp.len() {
                return Err(ConditioningError::shape(name, exp.len(), got.len()));
            }
        }
        let dims = (self.tables.dim, self.head.dim, self.head.hidden, self.head.outputs);
        let want_dims = (want.tables.dim, want.head.dim, want.head.hidden, want.head.outputs);
        if dims != want_dims {
            return Err(ConditioningError::shape("layer dimensions", format!("{want_dims:?}"), format!("{dims:?}")));
        }
        Ok(())
    }
}

/// Non-trainable parts regenerated from the config seed.
#[derive(Debug, Clone, PartialEq)]
struct Fixed {
    /// `dim x N_FEATURES`.
    scene_proj: Vec<f64>,
    /// `modes x dim`.
    mode_emb: Vec<f64>,
    mode_emb_mean: Vec<f64>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Fixed {
    fn new(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(0);
        let scene_proj = normals(&mut rng, cfg.dim * N_FEATURES, 1.0 / (N_FEATURES as f64).sqrt());
        let mode_emb = normals(&mut rng, cfg.modes * cfg.dim, 0.5);
        let mut mode_emb_mean = vec![0.0; cfg.dim];
        for row in mode_emb.chunks(cfg.dim) {
            mode_emb_mean.iter_mut().zip(row).for_each(|(m, r)| *m += r / cfg.modes as f64);
        }
        Fixed {
            scene_proj,
            mode_emb,
            mode_emb_mean,
        }
    }
}

/// Seeded initial weights for `cfg`.
pub(crate) fn init_params(cfg: &ModelConfig, kbm: &KbmParams) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut p = Params::zeros(cfg, kbm);
    p.tables.action = normals(&mut rng, p.tables.action.len(), TABLE_INIT_STD);
    p.tables.speed = normals(&mut rng, p.tables.speed.len(), TABLE_INIT_STD);
    p.head.w1 = normals(&mut rng, p.head.w1.len(), 0.5f64.sqrt());
    p.head.w2 = normals(&mut rng, p.head.w2.len(), 0.1);
    p.g_scale = cfg.g_scale_init;
    p
}

/// Switches applied at planning time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Plan without the decision: zero offset and zero velocity bias.
    pub bypass_decision: bool,
    /// Drop the residual: the final trajectory is the physics rollout.
    pub zero_residual: bool,
}

/// Everything produced while planning one frame, in the ego frame
/// (x lateral to the right, y forward, start heading pi/2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub mode: usize,
    /// Scores of the modes eligible under the route command.
    pub scores: Vec<f64>,
    pub decision_offset_norm: f64,
    pub b_v: f64,
    pub v0_prime: f64,
    pub start: VehicleState,
    pub controls: Vec<ControlStep>,
    pub physics: Trajectory,
    /// Raw residual field.
    pub residual: Vec<[f64; 2]>,
    /// `lambda * tanh(residual)` as applied.
    pub residual_offset: Vec<[f64; 2]>,
    pub final_trajectory: Trajectory,
    pub action_logits: Vec<f64>,
}

pub(crate) struct ModeForward {
    pub mode: usize,
    pub query: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: HeadOutput,
    pub controls: Vec<ControlStep>,
}

pub(crate) struct GroupForward {
    pub base: Vec<f64>,
    pub offset: Vec<f64>,
    pub b_v: f64,
    /// d b_v / d g_scale (zero while clamped or bypassed).
    pub dbv_dg: f64,
    pub v0_prime: f64,
    /// d v0' / d b_v.
    pub dv0_dbv: f64,
    pub modes: Vec<ModeForward>,
}

impl GroupForward {
    pub fn start(&self) -> VehicleState {
        VehicleState::new(0.0, 0.0, self.v0_prime, FRAC_PI_2)
    }
}

/// Frozen model: config, KBM parameters, fixed projections and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    kbm: KbmParams,
    params: Params,
    fixed: Fixed,
}

impl Model {
    pub fn new(config: ModelConfig, kbm: KbmParams) -> Result<Self, ConditioningError> {
        config.validate()?;
        kbm.validate()?;
        let params = init_params(&config, &kbm);
        Ok(Model {
            fixed: Fixed::new(&config),
            config,
            kbm,
            params,
        })
    }

    pub fn with_params(config: ModelConfig, kbm: KbmParams, params: Params) -> Result<Self, ConditioningError> {
        config.validate()?;
        kbm.validate()?;
        params.check_shape(&config, &kbm)?;
        Ok(Model {
            fixed: Fixed::new(&config),
            config,
            kbm,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kbm(&self) -> &KbmParams {
        &self.kbm
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    fn mode_emb(&self, m: usize) -> &[f64] {
        &self.fixed.mode_emb[m * self.config.dim..(m + 1) * self.config.dim]
    }

    /// Scene projection of the ego features (one D-vector).
    pub(crate) fn base(&self, ego: &EgoFacts) -> Vec<f64> {
        let f = scene_features(ego);
        self.fixed.scene_proj.chunks(N_FEATURES).map(|row| dot(row, &f)).collect()
    }

    /// Unconditioned planning queries for a batch of frames.
    pub fn scene_query(&self, egos: &[&EgoFacts]) -> PlanningQuery {
        let (m, d) = (self.config.modes, self.config.dim);
        let mut q = PlanningQuery::zeros(egos.len(), m, d);
        for (b, ego) in egos.iter().enumerate() {
            let base = self.base(ego);
            for mode in 0..m {
                let row = q.row_mut(b, mode);
                for i in 0..d {
                    row[i] = base[i] + self.mode_emb(mode)[i];
                }
            }
        }
        q
    }

    pub fn decision_offset(&self, dec: &FinalDecision) -> Vec<f64> {
        embed_decision(dec, &self.params.tables)
    }

    pub fn velocity_bias(&self, speed: SpeedSymbol, v0: f64) -> f64 {
        velocity_bias(speed, v0, self.params.g_scale, self.config.b_max, &self.config.speed_targets)
    }

    /// Action-head input: the conditioned query averaged over all modes.
    pub(crate) fn pooled(&self, base: &[f64], offset: &[f64]) -> Vec<f64> {
        base.iter()
            .zip(&self.fixed.mode_emb_mean)
            .zip(offset)
            .map(|((b, m), d)| b + m + d)
            .collect()
    }

    pub(crate) fn forward_group(&self, ego: &EgoFacts, dec: &FinalDecision, bypass: bool) -> GroupForward {
        let base = self.base(ego);
        let (offset, b_v, dbv_dg) = if bypass {
            (vec![0.0; self.config.dim], 0.0, 0.0)
        } else {
            let delta = self.config.speed_targets.resolve(dec.speed, ego.speed) - ego.speed;
            let raw = self.params.g_scale * delta;
            let active = raw.abs() < self.config.b_max;
            (self.decision_offset(dec), self.velocity_bias(dec.speed, ego.speed), if active { delta } else { 0.0 })
        };
        let v_raw = ego.speed + b_v;
        let modes = self
            .config
            .nav_modes(ego.nav)
            .map(|mode| {
                let query: Vec<f64> = base
                    .iter()
                    .zip(self.mode_emb(mode))
                    .zip(&offset)
                    .map(|((b, e), d)| b + e + d)
                    .collect();
                let (hidden, o) = self.params.head.forward(&query);
                let out = HeadOutput::from_raw(&o, self.kbm.horizon);
                let controls = out.controls(&self.kbm);
                ModeForward {
                    mode,
                    query,
                    hidden,
                    out,
                    controls,
                }
            })
            .collect();
        GroupForward {
            base,
            offset,
            b_v,
            dbv_dg,
            v0_prime: v_raw.max(0.0),
            dv0_dbv: if v_raw > 0.0 { 1.0 } else { 0.0 },
            modes,
        }
    }

    /// Plan one frame. The selected mode is the highest score among the
    /// modes of the route command, ties to the lowest index.
    pub fn plan(&self, ego: &EgoFacts, dec: &FinalDecision, opts: PlanOptions) -> Result<PlanOutput, ConditioningError> {
        let g = self.forward_group(ego, dec, opts.bypass_decision);
        let mut best = 0;
        for (i, m) in g.modes.iter().enumerate() {
            if m.out.score > g.modes[best].out.score {
                best = i;
            }
        }
        let chosen = &g.modes[best];
        let start = g.start();
        let physics = rollout(&start, &chosen.controls, &self.kbm)?;
        let residual = if opts.zero_residual {
            vec![[0.0; 2]; self.kbm.horizon]
        } else {
            chosen.out.residual.clone()
        };
        let lambda = self.kbm.residual_scale;
        let final_trajectory = combine(&start, &physics, &residual, lambda, self.kbm.dt)?;
        let action_logits = self.params.action_head.logits(&self.pooled(&g.base, &g.offset));
        Ok(PlanOutput {
            mode: chosen.mode,
            scores: g.modes.iter().map(|m| m.out.score).collect(),
            decision_offset_norm: g.offset.iter().map(|v| v * v).sum::<f64>().sqrt(),
            b_v: g.b_v,
            v0_prime: g.v0_prime,
            start,
            controls: chosen.controls.clone(),
            physics,
            residual_offset: residual.iter().map(|[x, y]| [lambda * x.tanh(), lambda * y.tanh()]).collect(),
            residual,
            final_trajectory,
            action_logits,
        })
    }
}

/// `base + offset` for `|offset| <= bound`, stepped back toward `base` when
/// rounding the sum would put it past the bound.
fn offset_within(base: f64, offset: f64, bound: f64) -> f64 {
    let mut sum = base + offset;
    while (sum - base).abs() > bound {
        sum = if sum > base { sum.next_down() } else { sum.next_up() };
    }
    sum
}

/// `tau_final = tau_physics + lambda * tanh(residual)` on positions.
///
/// Speed and heading are carried over from the physics rollout and adjusted
/// by how much the offset changes each inter-waypoint chord (length for
/// speed, direction for heading), so a zero residual reproduces the physics
/// trajectory exactly.
pub fn combine(
    start: &VehicleState,
    physics: &Trajectory,
    residual: &[[f64; 2]],
    lambda: f64,
    dt: f64,
) -> Result<Trajectory, ConditioningError> {
    if residual.len() != physics.len() {
        return Err(ConditioningError::shape("residual horizon", physics.len(), residual.len()));
    }
    let mut prev_p = (start.x, start.y);
    let mut prev_f = prev_p;
    let waypoints = physics
        .waypoints
        .iter()
        .zip(residual)
        .map(|(w, [rx, ry])| {
            let x = offset_within(w.x, lambda * rx.tanh(), lambda);
            let y = offset_within(w.y, lambda * ry.tanh(), lambda);
            let chord_p = (w.x - prev_p.0, w.y - prev_p.1);
            let chord_f = (x - prev_f.0, y - prev_f.1);
            prev_p = (w.x, w.y);
            prev_f = (x, y);
            let len_p = chord_p.0.hypot(chord_p.1);
            let len_f = chord_f.0.hypot(chord_f.1);
            let v = (w.v + (len_f - len_p) / dt).max(0.0);
            let heading = if len_p > 1e-9 && len_f > 1e-9 {
                let turn = wrap_angle(chord_f.1.atan2(chord_f.0) - chord_p.1.atan2(chord_p.0));
                wrap_angle(w.heading + turn)
            } else {
                w.heading
            };
            Waypoint { t: w.t, x, y, v, heading }
        })
        .collect();
    Ok(Trajectory { waypoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::{NavCommand, RuleType};
    use approx::assert_abs_diff_eq;

    fn dec(a: Action, s: SpeedSymbol) -> FinalDecision {
        FinalDecision {
            action: a,
            speed: s,
            tier: RuleType::Safety,
            winning_suggestion: "t".into(),
        }
    }

    fn model() -> Model {
        Model::new(ModelConfig::default(), KbmParams::default()).unwrap()
    }

    #[test]
    fn zero_tables_embed_to_zero() {
        let t = DecisionTables::zeros(16);
        assert!(embed_decision(&dec(Action::Yield, SpeedSymbol::Zero), &t).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_is_additive() {
        let m = model();
        let t = &m.params().tables;
        let a = embed_decision(&dec(Action::Yield, SpeedSymbol::Zero), t);
        let b = embed_decision(&dec(Action::Yield, SpeedSymbol::Slow), t);
        for i in 0..t.dim {
            let want = t.speed_row(SpeedSymbol::Zero)[i] - t.speed_row(SpeedSymbol::Slow)[i];
            assert_abs_diff_eq!(a[i] - b[i], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn seeded_embedding_reproducible() {
        let d = dec(Action::KeepLane, SpeedSymbol::Normal);
        assert_eq!(model().decision_offset(&d), model().decision_offset(&d));
    }

    #[test]
    fn conditioning_broadcasts() {
        let q = PlanningQuery::zeros(2, 3, 4);
        assert_eq!(condition_query(&q, &[0.0; 4]).unwrap(), q);
        let e1 = [1.0, 0.0, 0.0, 0.0];
        let c = condition_query(&q, &e1).unwrap();
        for b in 0..2 {
            for m in 0..3 {
                assert_eq!(c.row(b, m), &e1);
            }
        }
        assert!(matches!(condition_query(&q, &[0.0; 3]), Err(ConditioningError::ShapeMismatch { .. })));
    }

    #[test]
    fn case_study_bias() {
        let t = SpeedTargets::default();
        let b = velocity_bias(SpeedSymbol::Zero, 6.9, 0.29, 3.0, &t);
        assert!(b < 0.0 && (b + 2.0).abs() < 0.01, "{b}");
        assert_eq!(velocity_bias(SpeedSymbol::Current, 6.9, 0.29, 3.0, &t), 0.0);
        assert_eq!(velocity_bias(SpeedSymbol::Fast, 12.0, 0.29, 3.0, &t), 0.0);
        assert_eq!(velocity_bias(SpeedSymbol::Zero, 30.0, 0.29, 3.0, &t), -3.0);
    }

    #[test]
    fn zero_head_coasts() {
        let h = Head::zeros(8, 4, 25);
        let (_, o) = h.forward(&[1.0; 8]);
        let out = HeadOutput::from_raw(&o, 6);
        let c = out.controls(&KbmParams::default());
        assert!(c.iter().all(|c| c.accel == 0.0 && c.steer == 0.0));
        assert!(out.residual.iter().all(|r| *r == [0.0, 0.0]));
    }

    #[test]
    fn combine_zero_residual_is_identity() {
        let p = KbmParams::default();
        let start = VehicleState::new(0.0, 0.0, 7.0, FRAC_PI_2);
        let controls: Vec<_> = (0..6).map(|i| ControlStep::new(-1.0 + 0.3 * i as f64, 0.1 - 0.04 * i as f64)).collect();
        let phys = rollout(&start, &controls, &p).unwrap();
        assert_eq!(combine(&start, &phys, &[[0.0; 2]; 6], 0.5, p.dt).unwrap(), phys);
    }

    #[test]
    fn combine_saturates_at_lambda() {
        let p = KbmParams::default();
        let start = VehicleState::new(0.0, 0.0, 5.0, FRAC_PI_2);
        let phys = rollout(&start, &[ControlStep::default(); 6], &p).unwrap();
        let f = combine(&start, &phys, &[[1e3, 1e3]; 6], 0.5, p.dt).unwrap();
        for (a, b) in f.waypoints.iter().zip(&phys.waypoints) {
            assert_abs_diff_eq!(a.x - b.x, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(a.y - b.y, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn offset_never_rounds_past_the_bound() {
        // 127.9 + 0.3 crosses into the next binade, where the sum rounds up.
        let lambda = 0.3;
        for base in [127.9, -127.9, 1e6 + 0.1, 0.0] {
            for off in [lambda, -lambda, lambda * 0.999_999_999_999] {
                let sum = offset_within(base, off, lambda);
                assert!((sum - base).abs() <= lambda, "{base} + {off} -> {sum}");
                assert!((sum - (base + off)).abs() <= 2.0 * (base + off).abs().max(1.0) * f64::EPSILON);
            }
        }
    }

    #[test]
    fn flatten_round_trip() {
        let m = model();
        let flat = m.params().flatten();
        assert_eq!(flat.len(), m.params().len());
        let mut p = Params::zeros(m.config(), m.kbm());
        p.set_flat(&flat).unwrap();
        assert_eq!(&p, m.params());
    }

    #[test]
    fn plan_is_deterministic_and_selects_within_route_group() {
        let m = model();
        let mut ego = EgoFacts::new(6.9, 0.0, NavCommand::Right);
        ego.history_speeds = vec![7.0];
        let d = dec(Action::Yield, SpeedSymbol::Zero);
        let a = m.plan(&ego, &d, PlanOptions::default()).unwrap();
        let b = m.plan(&ego, &d, PlanOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(m.config().nav_modes(NavCommand::Right).contains(&a.mode));
        assert_eq!(a.scores.len(), 6);
        assert_abs_diff_eq!(a.v0_prime, 6.9 + a.b_v, epsilon = 1e-12);
    }

    #[test]
    fn query_shape() {
        let m = model();
        let e = EgoFacts::new(5.0, 0.0, NavCommand::Straight);
        let q = m.scene_query(&[&e, &e]);
        assert_eq!(q.shape(), (2, 18, 256));
        assert!(q.as_slice().iter().all(|v| v.is_finite()));
    }
}
