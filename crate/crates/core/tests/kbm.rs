mod common;

use std::f64::consts::PI;

use common::{central_difference, euler_oracle, fd_agrees, position_error};
use nsplan_core::kbm::{
    implied_curvatures, rk2_step, rollout, rollout_with_gradients, wrap_angle, ControlStep, KbmParams, VehicleState,
};
use proptest::prelude::*;

#[test]
fn constant_turn_stays_on_circle() {
    let p = KbmParams::default();
    let s0 = VehicleState::new(0.0, 0.0, 5.0, 0.0);
    let t = rollout(&s0, &[ControlStep::new(0.0, 0.2); 6], &p).unwrap();
    let r = p.wheelbase / 0.2f64.tan();
    // Left turn from heading 0: centre straight up from the start.
    for w in &t.waypoints {
        let d = w.x.hypot(w.y - r);
        assert!((d - r).abs() < 1e-2, "radius {d} vs {r}");
        assert_eq!(w.v, 5.0);
    }
}

#[test]
fn single_step_matches_euler_oracle() {
    let p = KbmParams::default();
    let s0 = VehicleState::new(0.0, 0.0, 8.0, 0.0);
    let c = ControlStep::new(-2.0, 0.05);
    let ours = rk2_step(&s0, &c, &p);
    let oracle = euler_oracle(&s0, &[c], &p, 1e-4);
    assert!(position_error(&ours, &oracle[0]) < 1e-3);
    assert!((ours.v - oracle[0].v).abs() < 1e-3);
}

#[test]
fn braking_profile_decelerates() {
    let p = KbmParams::default();
    let s0 = VehicleState::new(0.0, 0.0, 6.9, PI / 2.0);
    let controls: Vec<_> = [-3.0, -3.0, -3.0, -2.0, -1.5, -0.5].iter().map(|&a| ControlStep::new(a, 0.0)).collect();
    let t = rollout(&s0, &controls, &p).unwrap();
    let oracle = euler_oracle(&s0, &controls, &p, 1e-4);
    let mut last = s0.v;
    for (w, o) in t.waypoints.iter().zip(&oracle) {
        assert!(w.v < last);
        last = w.v;
        assert!(position_error(&w.state(), o) < 1e-3);
    }
    assert!(last <= 0.5);
}

#[test]
fn zero_speed_fixed_point() {
    let p = KbmParams::default();
    let s0 = VehicleState::new(3.0, -1.0, 0.0, 1.0);
    let controls: Vec<_> = (0..6).map(|i| ControlStep::new(0.0, 0.1 * i as f64 - 0.3)).collect();
    for w in &rollout(&s0, &controls, &p).unwrap().waypoints {
        assert_eq!((w.x, w.y, w.heading), (3.0, -1.0, 1.0));
    }
}

fn controls_strategy(h: usize, accel: f64, steer: f64) -> impl Strategy<Value = Vec<ControlStep>> {
    prop::collection::vec((-accel..accel, -steer..steer).prop_map(|(a, d)| ControlStep::new(a, d)), h)
}

fn state_strategy() -> impl Strategy<Value = VehicleState> {
    (-20.0..20.0f64, -20.0..20.0f64, 0.0..15.0f64, -PI..PI).prop_map(|(x, y, v, h)| VehicleState::new(x, y, v, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heading_wrapped_and_speed_non_negative(s0 in state_strategy(), controls in controls_strategy(6, 4.0, 0.6)) {
        let t = rollout(&s0, &controls, &KbmParams::default()).unwrap();
        for w in &t.waypoints {
            prop_assert!(w.heading > -PI && w.heading <= PI);
            prop_assert!(w.v >= 0.0);
        }
    }

    #[test]
    fn timestamps_step_by_dt(controls in controls_strategy(6, 4.0, 0.6)) {
        let p = KbmParams::default();
        let t = rollout(&VehicleState::new(0.0, 0.0, 5.0, 0.0), &controls, &p).unwrap();
        for (k, w) in t.waypoints.iter().enumerate() {
            prop_assert_eq!(w.t, (k + 1) as f64 * p.dt);
        }
    }

    #[test]
    fn physics_is_curvature_feasible(s0 in state_strategy(), controls in controls_strategy(6, 4.0, 0.6)) {
        let p = KbmParams::default();
        let t = rollout(&s0, &controls, &p).unwrap();
        for k in implied_curvatures(&s0, &t, p.dt) {
            prop_assert!(k <= p.max_curvature() + 1e-6, "curvature {}", k);
        }
    }

    #[test]
    fn wrap_is_idempotent(a in -50.0..50.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI && w <= PI);
        prop_assert_eq!(wrap_angle(w), w);
        prop_assert!(((a - w) / (2.0 * PI)).round() * 2.0 * PI - (a - w) < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences(
        v0 in 2.0..12.0f64,
        heading in -PI..PI,
        controls in controls_strategy(6, 0.3, 0.6),
    ) {
        // Gentle acceleration keeps the speed clamp inactive.
        let p = KbmParams::default();
        let s0 = VehicleState::new(0.0, 0.0, v0, heading);
        let (_, jac) = rollout_with_gradients(&s0, &controls, &p).unwrap();
        let h = 1e-5;
        for param in 0..jac.n_params() {
            let perturbed = |eps: f64| {
                let mut c = controls.clone();
                let mut s = s0;
                if param < 6 {
                    c[param].accel += eps;
                } else if param < 12 {
                    c[param - 6].steer += eps;
                } else {
                    s.v += eps;
                }
                rollout(&s, &c, &p).unwrap()
            };
            for k in 0..6 {
                let fx = central_difference(|e| perturbed(e).waypoints[k].x, 0.0, h);
                let fy = central_difference(|e| perturbed(e).waypoints[k].y, 0.0, h);
                let (ax, ay) = jac.get(k, param);
                prop_assert!(fd_agrees(ax, fx), "dx_{}/dp_{}: {} vs {}", k, param, ax, fx);
                prop_assert!(fd_agrees(ay, fy), "dy_{}/dp_{}: {} vs {}", k, param, ay, fy);
            }
        }
    }
}
