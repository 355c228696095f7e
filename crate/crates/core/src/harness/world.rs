//! Scripted world to scene facts.

use crate::kbm::wrap_angle;
use crate::predicate::{Attribute, EgoFacts, ObjectFact, RelativePos, SceneFacts};

use super::geometry::OrientedBox;
use super::scenario::{Agent, Scenario};

/// Look-ahead for the constant-velocity time-to-collision sweep, s.
pub const TTC_HORIZON_S: f64 = 8.0;
const TTC_STEP_S: f64 = 0.05;
/// Reported time-to-collision for boxes that already overlap; the fact
/// format requires a positive value.
pub const MIN_TTC_S: f64 = 0.01;
const HISTORY_LEN: usize = 3;

/// Earliest time at which the ego box, held at its current speed and
/// heading, overlaps the agent under constant velocity. [`MIN_TTC_S`] if
/// they already overlap; `INFINITY` if they do not within [`TTC_HORIZON_S`].
pub fn sweep_ttc(ego: &OrientedBox, ego_speed: f64, agent: &Agent, t0: f64) -> f64 {
    let (s, c) = ego.heading.sin_cos();
    let at = |dt: f64| {
        let e = OrientedBox {
            cx: ego.cx + c * ego_speed * dt,
            cy: ego.cy + s * ego_speed * dt,
            ..*ego
        };
        e.overlaps(&agent.box_at(t0 + dt))
    };
    if at(0.0) {
        return MIN_TTC_S;
    }
    let steps = (TTC_HORIZON_S / TTC_STEP_S).round() as usize;
    for k in 1..=steps {
        let hi = k as f64 * TTC_STEP_S;
        if at(hi) {
            let mut lo = hi - TTC_STEP_S;
            let mut hi = hi;
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if at(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi.max(MIN_TTC_S);
        }
    }
    f64::INFINITY
}

fn relative_pos(lx: f64, ly: f64, half_length: f64, lane_width: f64) -> RelativePos {
    if ly > half_length {
        if lx.abs() <= lane_width / 2.0 {
            RelativePos::Front
        } else if lx < 0.0 {
            RelativePos::FrontLeft
        } else {
            RelativePos::FrontRight
        }
    } else if ly < -half_length {
        RelativePos::Rear
    } else if lx < 0.0 {
        RelativePos::Left
    } else {
        RelativePos::Right
    }
}

fn attribute(speed: f64, rel_heading: f64) -> Attribute {
    if speed < 0.1 {
        Attribute::Stationary
    } else if rel_heading.sin().abs() > 0.5 {
        Attribute::Crossing
    } else {
        Attribute::Moving
    }
}

/// Facts for `frame`, as seen from the expert-logged ego pose (open loop).
pub fn extract_facts(scn: &Scenario, frame: usize) -> SceneFacts {
    let t = scn.frame_time(frame);
    let pose = scn.ego_pose(frame);
    let ego_state = &scn.expert[frame];
    let ego_box = scn.ego_box(pose.x, pose.y, pose.heading);
    let v0 = scn.expert[0].v;
    let history_speeds = (1..=HISTORY_LEN)
        .rev()
        .map(|back| frame.checked_sub(back).map_or(v0, |i| scn.expert[i].v))
        .collect();
    // Heading is reported relative to the road direction (+y).
    let ego = EgoFacts {
        speed: ego_state.v,
        heading: wrap_angle(pose.heading - std::f64::consts::FRAC_PI_2),
        nav: scn.nav,
        lane_id: (pose.x / scn.lane_width).round() as i32,
        history_speeds,
    };
    let objects = scn
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let ap = a.pose_at(t);
            let (lx, ly) = pose.to_local(ap.x, ap.y);
            let rel_heading = wrap_angle(a.heading - pose.heading);
            let ttc = match scn.ttc_override {
                Some(v) if frame == 0 && i == 0 => v,
                _ => sweep_ttc(&ego_box, ego_state.v, a, t),
            };
            ObjectFact {
                id: a.id,
                category: a.category,
                distance: ego_box.gap(&a.box_at(t)),
                speed: a.speed,
                heading: rel_heading,
                relative_pos: relative_pos(lx, ly, scn.ego_length / 2.0, scn.lane_width),
                attribute: attribute(a.speed, rel_heading),
                ttc,
            }
        })
        .collect();
    SceneFacts {
        frame_id: format!("{}#{frame}", scn.id),
        ego,
        objects,
    }
}
