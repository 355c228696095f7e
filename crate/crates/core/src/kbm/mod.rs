//! Differentiable kinematic bicycle model.
//!
//! ```text
//! x' = v cos(psi)    y' = v sin(psi)    v' = a    psi' = v tan(delta) / L
//! ```
//!
//! Controls are held constant over each waypoint interval `dt`; the interval
//! is integrated with `substeps` explicit midpoint steps. Speed is clamped at
//! zero (no reverse); the clamp has a zero subgradient. Jacobians of waypoint positions with respect to every
//! control and the initial speed are propagated alongside the state
//! (forward accumulation), so they are exact up to rounding.

use std::f64::consts::PI;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbmError {
    #[error("invalid KBM parameters: {0}")]
    InvalidParams(String),
    #[error("expected {expected} control steps, got {found}")]
    HorizonMismatch { expected: usize, found: usize },
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub heading: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, v: f64, heading: f64) -> Self {
        VehicleState { x, y, v, heading }
    }
}

/// One zero-order-hold control: acceleration (m/s^2) and front-wheel
/// steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlStep {
    pub accel: f64,
    pub steer: f64,
}

impl ControlStep {
    pub fn new(accel: f64, steer: f64) -> Self {
        ControlStep { accel, steer }
    }

    /// Squash unbounded head outputs into the actuator box.
    pub fn from_raw(raw_accel: f64, raw_steer: f64, p: &KbmParams) -> Self {
        ControlStep {
            accel: p.accel_max * raw_accel.tanh(),
            steer: p.steer_max * raw_steer.tanh(),
        }
    }

    pub fn within(&self, p: &KbmParams) -> bool {
        self.accel.abs() <= p.accel_max && self.steer.abs() <= p.steer_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbmParams {
    /// m.
    pub wheelbase: f64,
    /// s.
    pub dt: f64,
    pub horizon: usize,
    /// Midpoint steps per waypoint interval.
    pub substeps: usize,
    pub accel_max: f64,
    pub steer_max: f64,
    /// Residual scale lambda, m.
    pub residual_scale: f64,
}

impl Default for KbmParams {
    fn default() -> Self {
        KbmParams {
            wheelbase: 2.7,
            dt: 0.5,
            horizon: 6,
            substeps: 16,
            accel_max: 4.0,
            steer_max: 0.6,
            residual_scale: 0.5,
        }
    }
}

impl KbmParams {
    pub fn validate(&self) -> Result<(), KbmError> {
        let bad = |m: &str| Err(KbmError::InvalidParams(m.to_string()));
        if !(self.wheelbase > 0.0 && self.wheelbase.is_finite()) {
            return bad("wheelbase must be > 0");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if self.horizon == 0 {
            return bad("horizon must be > 0");
        }
        if self.substeps == 0 {
            return bad("substeps must be > 0");
        }
        if !(self.accel_max > 0.0 && self.accel_max.is_finite()) {
            return bad("accel_max must be > 0");
        }
        if !(self.steer_max > 0.0 && self.steer_max < PI / 2.0) {
            return bad("steer_max must lie in (0, pi/2)");
        }
        if !(self.residual_scale >= 0.0 && self.residual_scale.is_finite()) {
            return bad("residual_scale must be >= 0");
        }
        Ok(())
    }

    /// Planning horizon in seconds.
    pub fn horizon_s(&self) -> f64 {
        self.dt * self.horizon as f64
    }

    /// Integration step, s.
    pub fn substep(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    /// Largest curvature the steering bound allows, 1/m.
    pub fn max_curvature(&self) -> f64 {
        self.steer_max.tan() / self.wheelbase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub heading: f64,
}

impl Waypoint {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.v, self.heading)
    }
}

/// Timestamped states; waypoint `k` (0-based) is the state after `k + 1`
/// steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.waypoints.iter().map(|w| (w.x, w.y))
    }

    pub fn last(&self) -> Option<&Waypoint> {
        self.waypoints.last()
    }

    /// Shift all timestamps by `t0`.
    pub fn offset_time(mut self, t0: f64) -> Self {
        for w in &mut self.waypoints {
            w.t += t0;
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,v,psi\n");
        for w in &self.waypoints {
            let _ = writeln!(out, "{},{},{},{},{}", w.t, w.x, w.y, w.v, w.heading);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

/// State time-derivative (x', y', v', psi').
pub fn derivative(s: &VehicleState, c: &ControlStep, p: &KbmParams) -> VehicleState {
    VehicleState {
        x: s.v * s.heading.cos(),
        y: s.v * s.heading.sin(),
        v: c.accel,
        heading: s.v * c.steer.tan() / p.wheelbase,
    }
}

fn axpy(s: &VehicleState, h: f64, k: &VehicleState) -> VehicleState {
    VehicleState {
        x: s.x + h * k.x,
        y: s.y + h * k.y,
        v: s.v + h * k.v,
        heading: s.heading + h * k.heading,
    }
}

/// One explicit midpoint step of length `h`. Speed is clamped at zero at the
/// midpoint and at the end; heading is wrapped into (-pi, pi].
pub fn midpoint_step(s: &VehicleState, c: &ControlStep, p: &KbmParams, h: f64) -> VehicleState {
    let k1 = derivative(s, c, p);
    let mut mid = axpy(s, 0.5 * h, &k1);
    mid.v = mid.v.max(0.0);
    let k2 = derivative(&mid, c, p);
    let mut next = axpy(s, h, &k2);
    next.v = next.v.max(0.0);
    next.heading = wrap_angle(next.heading);
    next
}

/// Advance one waypoint interval `p.dt` under a held control.
pub fn rk2_step(s: &VehicleState, c: &ControlStep, p: &KbmParams) -> VehicleState {
    let h = p.substep();
    (0..p.substeps).fold(*s, |s, _| midpoint_step(&s, c, p, h))
}

fn check_len(controls: &[ControlStep], p: &KbmParams) -> Result<(), KbmError> {
    if controls.len() != p.horizon {
        return Err(KbmError::HorizonMismatch {
            expected: p.horizon,
            found: controls.len(),
        });
    }
    Ok(())
}

/// Integrate `controls` from `s0`: the physics baseline trajectory.
pub fn rollout(s0: &VehicleState, controls: &[ControlStep], p: &KbmParams) -> Result<Trajectory, KbmError> {
    check_len(controls, p)?;
    let mut s = *s0;
    let waypoints = controls
        .iter()
        .enumerate()
        .map(|(k, c)| {
            s = rk2_step(&s, c, p);
            Waypoint {
                t: (k + 1) as f64 * p.dt,
                x: s.x,
                y: s.y,
                v: s.v,
                heading: s.heading,
            }
        })
        .collect();
    Ok(Trajectory { waypoints })
}

/// Position Jacobians of a rollout.
///
/// Parameters are laid out as `a_0..a_{H-1}, delta_0..delta_{H-1}, v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutJacobian {
    horizon: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl RolloutJacobian {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_params(&self) -> usize {
        2 * self.horizon + 1
    }

    /// d(x_k, y_k) / d(param).
    pub fn get(&self, k: usize, param: usize) -> (f64, f64) {
        let i = k * self.n_params() + param;
        (self.dx[i], self.dy[i])
    }

    pub fn d_accel(&self, k: usize, j: usize) -> (f64, f64) {
        self.get(k, j)
    }

    pub fn d_steer(&self, k: usize, j: usize) -> (f64, f64) {
        self.get(k, self.horizon + j)
    }

    pub fn d_v0(&self, k: usize) -> (f64, f64) {
        self.get(k, 2 * self.horizon)
    }

    /// Pull a per-waypoint position gradient back onto the parameters:
    /// returns `sum_k J_k^T g_k`.
    pub fn vjp(&self, grad_positions: &[(f64, f64)]) -> Vec<f64> {
        let n = self.n_params();
        let mut out = vec![0.0; n];
        for (k, (gx, gy)) in grad_positions.iter().enumerate().take(self.horizon) {
            for (p, o) in out.iter_mut().enumerate() {
                let i = k * n + p;
                *o += gx * self.dx[i] + gy * self.dy[i];
            }
        }
        out
    }
}

/// Tangent of the 4-state along every parameter direction.
#[derive(Clone)]
struct Tangent {
    x: Vec<f64>,
    y: Vec<f64>,
    v: Vec<f64>,
    heading: Vec<f64>,
}

impl Tangent {
    fn zeros(n: usize) -> Self {
        Tangent {
            x: vec![0.0; n],
            y: vec![0.0; n],
            v: vec![0.0; n],
            heading: vec![0.0; n],
        }
    }

    fn axpy(&self, h: f64, k: &Tangent) -> Tangent {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a + h * b).collect();
        Tangent {
            x: f(&self.x, &k.x),
            y: f(&self.y, &k.y),
            v: f(&self.v, &k.v),
            heading: f(&self.heading, &k.heading),
        }
    }
}

/// Directional derivative of [`derivative`] along the state tangent `ts`
/// plus the control columns `(accel_col, steer_col)`.
fn derivative_tangent(
    s: &VehicleState,
    c: &ControlStep,
    p: &KbmParams,
    ts: &Tangent,
    accel_col: usize,
    steer_col: usize,
) -> Tangent {
    let n = ts.x.len();
    let (sin, cos) = s.heading.sin_cos();
    let tan = c.steer.tan();
    let mut out = Tangent::zeros(n);
    for i in 0..n {
        out.x[i] = cos * ts.v[i] - s.v * sin * ts.heading[i];
        out.y[i] = sin * ts.v[i] + s.v * cos * ts.heading[i];
        out.heading[i] = tan / p.wheelbase * ts.v[i];
    }
    out.v[accel_col] += 1.0;
    out.heading[steer_col] += s.v * (1.0 + tan * tan) / p.wheelbase;
    out
}

/// [`rollout`] plus exact position Jacobians with respect to every control
/// and the initial speed. Causal: d waypoint_k / d control_j = 0 for j > k.
pub fn rollout_with_gradients(
    s0: &VehicleState,
    controls: &[ControlStep],
    p: &KbmParams,
) -> Result<(Trajectory, RolloutJacobian), KbmError> {
    check_len(controls, p)?;
    let h = p.horizon;
    let n = 2 * h + 1;
    let mut s = *s0;
    let mut ts = Tangent::zeros(n);
    ts.v[2 * h] = 1.0;

    let mut waypoints = Vec::with_capacity(h);
    let mut jac = RolloutJacobian {
        horizon: h,
        dx: Vec::with_capacity(h * n),
        dy: Vec::with_capacity(h * n),
    };

    let dt = p.substep();
    for (k, c) in controls.iter().enumerate() {
        let (ca, cd) = (k, h + k);
        for _ in 0..p.substeps {
            let k1 = derivative(&s, c, p);
            let dk1 = derivative_tangent(&s, c, p, &ts, ca, cd);
            let mut mid = axpy(&s, 0.5 * dt, &k1);
            let mut dmid = ts.axpy(0.5 * dt, &dk1);
            if mid.v < 0.0 {
                mid.v = 0.0;
                dmid.v.iter_mut().for_each(|d| *d = 0.0);
            }
            let k2 = derivative(&mid, c, p);
            let dk2 = derivative_tangent(&mid, c, p, &dmid, ca, cd);
            let mut next = axpy(&s, dt, &k2);
            ts = ts.axpy(dt, &dk2);
            if next.v < 0.0 {
                next.v = 0.0;
                ts.v.iter_mut().for_each(|d| *d = 0.0);
            }
            next.heading = wrap_angle(next.heading);
            s = next;
        }

        waypoints.push(Waypoint {
            t: (k + 1) as f64 * p.dt,
            x: s.x,
            y: s.y,
            v: s.v,
            heading: s.heading,
        });
        jac.dx.extend_from_slice(&ts.x);
        jac.dy.extend_from_slice(&ts.y);
    }
    Ok((Trajectory { waypoints }, jac))
}

/// |heading change| / path length for each consecutive waypoint pair,
/// starting from `start`. Path length is the trapezoid of the two speeds,
/// exact for a held acceleration. A pair with no travel reports 0 when the
/// heading is unchanged and infinity otherwise.
pub fn implied_curvatures(start: &VehicleState, traj: &Trajectory, dt: f64) -> Vec<f64> {
    let mut prev = (start.v, start.heading);
    traj.waypoints
        .iter()
        .map(|w| {
            let arc = 0.5 * dt * (prev.0 + w.v);
            let turn = wrap_angle(w.heading - prev.1).abs();
            prev = (w.v, w.heading);
            if arc > 1e-12 {
                turn / arc
            } else if turn < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> KbmParams {
        KbmParams::default()
    }

    #[test]
    fn derivative_examples() {
        let p = params();
        let d = derivative(&VehicleState::new(0.0, 0.0, 10.0, 0.0), &ControlStep::new(0.0, 0.0), &p);
        assert_eq!(d, VehicleState::new(10.0, 0.0, 0.0, 0.0));

        let d = derivative(&VehicleState::new(0.0, 0.0, 5.0, PI / 2.0), &ControlStep::new(1.0, 0.0), &p);
        assert_abs_diff_eq!(d.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.y, 5.0, epsilon = 1e-12);
        assert_eq!(d.v, 1.0);
        assert_eq!(d.heading, 0.0);

        let d = derivative(&VehicleState::new(0.0, 0.0, 10.0, 0.0), &ControlStep::new(0.0, 0.1), &p);
        assert_abs_diff_eq!(d.heading, 0.371_610, epsilon = 1e-6);
    }

    #[test]
    fn straight_step_exact() {
        let s = rk2_step(&VehicleState::new(0.0, 0.0, 10.0, 0.0), &ControlStep::default(), &params());
        assert_eq!(s, VehicleState::new(5.0, 0.0, 10.0, 0.0));
    }

    #[test]
    fn single_substep_is_plain_midpoint() {
        let p = KbmParams { substeps: 1, ..params() };
        let s = VehicleState::new(0.0, 0.0, 8.0, 0.0);
        let c = ControlStep::new(-2.0, 0.05);
        let k1 = derivative(&s, &c, &p);
        let k2 = derivative(&axpy(&s, 0.25, &k1), &c, &p);
        assert_eq!(rk2_step(&s, &c, &p), axpy(&s, 0.5, &k2));
    }

    #[test]
    fn stationary_regardless_of_steering() {
        let s = rk2_step(&VehicleState::default(), &ControlStep::new(0.0, 0.3), &params());
        assert_eq!(s, VehicleState::default());
    }

    #[test]
    fn straight_rollout() {
        let t = rollout(&VehicleState::new(0.0, 0.0, 10.0, 0.0), &[ControlStep::default(); 6], &params()).unwrap();
        let xs: Vec<f64> = t.waypoints.iter().map(|w| w.x).collect();
        assert_eq!(xs, vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        assert!(t.waypoints.iter().all(|w| w.y == 0.0));
        let ts: Vec<f64> = t.waypoints.iter().map(|w| w.t).collect();
        assert_eq!(ts, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn no_reverse() {
        let t = rollout(&VehicleState::new(0.0, 0.0, 1.0, 0.0), &[ControlStep::new(-4.0, 0.0); 6], &params()).unwrap();
        let mut last_x = 0.0;
        for w in &t.waypoints {
            assert!(w.v >= 0.0);
            assert!(w.x >= last_x);
            last_x = w.x;
        }
        assert_eq!(t.last().unwrap().v, 0.0);
    }

    #[test]
    fn horizon_mismatch() {
        assert!(matches!(
            rollout(&VehicleState::default(), &[ControlStep::default(); 5], &params()),
            Err(KbmError::HorizonMismatch { expected: 6, found: 5 })
        ));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn straight_v0_gradient() {
        let (_, j) = rollout_with_gradients(&VehicleState::new(0.0, 0.0, 10.0, 0.0), &[ControlStep::default(); 6], &params()).unwrap();
        for k in 0..6 {
            assert_abs_diff_eq!(j.d_v0(k).0, (k + 1) as f64 * 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn causality() {
        let controls: Vec<_> = (0..6).map(|i| ControlStep::new(0.3 * i as f64 - 1.0, 0.05 * i as f64)).collect();
        let (_, j) = rollout_with_gradients(&VehicleState::new(0.0, 0.0, 7.0, 0.3), &controls, &params()).unwrap();
        for k in 0..6 {
            for jj in (k + 1)..6 {
                assert_eq!(j.d_accel(k, jj), (0.0, 0.0));
                assert_eq!(j.d_steer(k, jj), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn gradient_rollout_matches_plain_rollout() {
        let controls: Vec<_> = (0..6).map(|i| ControlStep::new(1.0 - 0.4 * i as f64, 0.2 - 0.07 * i as f64)).collect();
        let s0 = VehicleState::new(1.0, -2.0, 6.0, 3.0);
        let (a, _) = rollout_with_gradients(&s0, &controls, &params()).unwrap();
        assert_eq!(a, rollout(&s0, &controls, &params()).unwrap());
    }

    #[test]
    fn csv_export() {
        let t = rollout(&VehicleState::new(0.0, 0.0, 2.0, 0.0), &[ControlStep::default(); 6], &params()).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("t,x,y,v,psi\n0.5,1,0,2,0\n"));
        assert_eq!(csv.lines().count(), 7);
        let back: Trajectory = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn bounded_controls() {
        let p = params();
        let c = ControlStep::from_raw(1e9, -1e9, &p);
        assert!(c.within(&p));
        assert_eq!(c, ControlStep::new(4.0, -0.6));
    }
}
