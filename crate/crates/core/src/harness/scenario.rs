//! Parametric scenario templates with scripted agents and experts.
//!
//! The world frame matches the planning frame of frame 0: the ego starts at
//! the origin heading along +y, and +x is to its right. Every agent moves at
//! constant velocity. The expert is one continuous log produced by a
//! closed-loop scripted controller integrated with the same KBM as the
//! planner, so it is feasible by construction; it is re-checked anyway.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kbm::{implied_curvatures, rk2_step, wrap_angle, ControlStep, KbmParams, Trajectory, VehicleState, Waypoint};
use crate::predicate::{Category, NavCommand};

use super::geometry::{OrientedBox, Pose};
use super::HarnessError;

pub const LANE_WIDTH: f64 = 3.5;
pub const EGO_LENGTH: f64 = 4.0;
pub const EGO_WIDTH: f64 = 1.8;
pub const PEDESTRIAN_SIZE: f64 = 0.6;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.9;
pub const DEFAULT_FRAMES: usize = 4;
/// Pedestrian-crossing experts brake at least this hard while yielding, m/s^2.
pub const YIELD_DECEL: f64 = 4.0;
/// Free-road experts settle to at most this speed, the `normal` target.
pub const ROAD_SPEED_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    EmptyRoad,
    LeadVehicle,
    PedestrianCrossing,
    LaneChange,
    IntersectionTurn,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::EmptyRoad,
        Template::LeadVehicle,
        Template::PedestrianCrossing,
        Template::LaneChange,
        Template::IntersectionTurn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::EmptyRoad => "empty_road",
            Template::LeadVehicle => "lead_vehicle",
            Template::PedestrianCrossing => "pedestrian_crossing",
            Template::LaneChange => "lane_change",
            Template::IntersectionTurn => "intersection_turn",
        }
    }

    fn index(self) -> u64 {
        Template::ALL.iter().position(|t| *t == self).unwrap() as u64
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| HarnessError::UnknownTemplate(s.to_string()))
    }
}

fn default_frames() -> usize {
    DEFAULT_FRAMES
}

/// Template name, seed and any pinned parameters. Parameters left out are
/// drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub template: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn new(template: Template, seed: u64) -> Self {
        ScenarioSpec {
            id: None,
            template: template.name().to_string(),
            seed,
            frames: DEFAULT_FRAMES,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn named(mut self, id: &str) -> Self {
        self.id = Some(id.to_string());
        self
    }

    /// The pedestrian yielding scene: 6.9 m/s, a pedestrian stepping out
    /// 4.5 m ahead, reported time-to-collision 0.89 s.
    pub fn case_study() -> Self {
        ScenarioSpec::new(Template::PedestrianCrossing, 0)
            .named("case_study")
            .with("v0", 6.9)
            .with("gap", 4.5)
            .with("ttc", 0.89)
            .with("walk_speed", 1.2)
            .with("side", 1.0)
            .with("ped_x", -0.1)
    }

    pub fn default_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| format!("{}-{}", self.template, self.seed))
    }
}

/// Scripted mover with a constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u32,
    pub category: Category,
    pub length: f64,
    pub width: f64,
    pub x0: f64,
    pub y0: f64,
    pub heading: f64,
    pub speed: f64,
}

impl Agent {
    pub fn pose_at(&self, t: f64) -> Pose {
        let (s, c) = self.heading.sin_cos();
        Pose::new(self.x0 + c * self.speed * t, self.y0 + s * self.speed * t, self.heading)
    }

    pub fn box_at(&self, t: f64) -> OrientedBox {
        let p = self.pose_at(t);
        OrientedBox::new(p.x, p.y, p.heading, self.length, self.width)
    }

    pub fn velocity(&self) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (c * self.speed, s * self.speed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub spec: ScenarioSpec,
    pub template: Template,
    /// Every template parameter, pinned or drawn.
    pub params: BTreeMap<String, f64>,
    pub nav: NavCommand,
    pub lane_width: f64,
    pub ego_length: f64,
    pub ego_width: f64,
    pub kbm: KbmParams,
    pub frames: usize,
    pub agents: Vec<Agent>,
    /// World-frame expert log, one state per `dt` from t = 0.
    pub expert: Vec<Waypoint>,
    pub expert_controls: Vec<ControlStep>,
    /// Time-to-collision reported for the first agent at frame 0 instead of
    /// the geometric estimate.
    pub ttc_override: Option<f64>,
}

impl Scenario {
    pub fn dt(&self) -> f64 {
        self.kbm.dt
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 * self.kbm.dt
    }

    pub fn ego_pose(&self, frame: usize) -> Pose {
        let w = &self.expert[frame];
        Pose::new(w.x, w.y, w.heading)
    }

    pub fn ego_box(&self, x: f64, y: f64, heading: f64) -> OrientedBox {
        OrientedBox::new(x, y, heading, self.ego_length, self.ego_width)
    }

    /// Expert future for `frame` in that frame's planning coordinates.
    pub fn expert_local(&self, frame: usize) -> Trajectory {
        let pose = self.ego_pose(frame);
        let t0 = self.frame_time(frame);
        let waypoints = self.expert[frame + 1..=frame + self.kbm.horizon]
            .iter()
            .map(|w| {
                let (x, y) = pose.to_local(w.x, w.y);
                Waypoint {
                    t: w.t - t0,
                    x,
                    y,
                    v: w.v,
                    heading: pose.heading_to_local(w.heading),
                }
            })
            .collect();
        Trajectory { waypoints }
    }

    /// Expert future for `frame` in world coordinates.
    pub fn expert_world(&self, frame: usize) -> Trajectory {
        Trajectory {
            waypoints: self.expert[frame + 1..=frame + self.kbm.horizon].to_vec(),
        }
    }

    /// First agent box overlapping the ego box placed along a world-frame
    /// trajectory whose waypoint times are absolute.
    pub fn first_collision(&self, world: &Trajectory) -> Option<(f64, u32)> {
        for w in &world.waypoints {
            let ego = self.ego_box(w.x, w.y, w.heading);
            for a in &self.agents {
                if ego.overlaps(&a.box_at(w.t)) {
                    return Some((w.t, a.id));
                }
            }
        }
        None
    }
}

/// Draws template parameters in a fixed order; pinned values still consume
/// their draw so pinning one parameter never shifts the others.
struct Draw<'a> {
    rng: ChaCha8Rng,
    given: &'a BTreeMap<String, f64>,
    out: BTreeMap<String, f64>,
}

impl<'a> Draw<'a> {
    fn new(spec: &'a ScenarioSpec, template: Template) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(template.index());
        Draw {
            rng,
            given: &spec.params,
            out: BTreeMap::new(),
        }
    }

    fn range(&mut self, name: &str, lo: f64, hi: f64) -> f64 {
        let drawn = self.rng.random_range(lo..=hi);
        let v = self.given.get(name).copied().unwrap_or(drawn);
        self.out.insert(name.to_string(), v);
        v
    }

    /// +1 or -1; a pinned value must be one of those.
    fn sign(&mut self, name: &str) -> Result<f64, String> {
        let drawn = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let v = self.given.get(name).copied().unwrap_or(drawn);
        if v != 1.0 && v != -1.0 {
            return Err(format!("{name} must be 1 or -1, got {v}"));
        }
        self.out.insert(name.to_string(), v);
        Ok(v)
    }

    /// Pinned value or `default`; consumes no draw.
    fn derived(&mut self, name: &str, default: f64) -> f64 {
        let v = self.given.get(name).copied().unwrap_or(default);
        self.out.insert(name.to_string(), v);
        v
    }

    fn optional(&mut self, name: &str) -> Option<f64> {
        let v = self.given.get(name).copied();
        if let Some(v) = v {
            self.out.insert(name.to_string(), v);
        }
        v
    }

    fn finish(self, id: &str) -> Result<BTreeMap<String, f64>, HarnessError> {
        if let Some(k) = self.given.keys().find(|k| !self.out.contains_key(*k)) {
            return Err(HarnessError::InvalidParam {
                scenario: id.to_string(),
                reason: format!("unknown parameter {k:?}"),
            });
        }
        Ok(self.out)
    }
}

fn require(id: &str, ok: bool, reason: impl FnOnce() -> String) -> Result<(), HarnessError> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::InvalidParam {
            scenario: id.to_string(),
            reason: reason(),
        })
    }
}

/// Lateral pure pursuit toward the line `x = target_x` running along +y.
fn pursue_lane(s: &VehicleState, target_x: f64, p: &KbmParams) -> f64 {
    let ld = (1.2 * s.v).max(6.0);
    let bearing = ld.atan2(target_x - s.x);
    let alpha = wrap_angle(bearing - s.heading);
    (2.0 * p.wheelbase * alpha.sin() / ld).atan()
}

fn cruise(v: f64, target: f64) -> f64 {
    (0.8 * (target - v)).clamp(-2.0, 1.5)
}

/// Constant deceleration that stops exactly `remaining` metres ahead.
fn stop_within(v: f64, remaining: f64) -> f64 {
    if remaining <= 0.05 {
        -f64::INFINITY
    } else {
        -(v * v) / (2.0 * remaining)
    }
}

/// Build a scenario. Deterministic in (template, params, seed, frames).
pub fn build_scenario(spec: &ScenarioSpec, kbm: &KbmParams) -> Result<Scenario, HarnessError> {
    let template: Template = spec.template.parse()?;
    let id = spec.default_id();
    require(&id, spec.frames >= 1, || "frames must be >= 1".into())?;
    if let Some((k, v)) = spec.params.iter().find(|(_, v)| !v.is_finite()) {
        return Err(HarnessError::InvalidParam {
            scenario: id,
            reason: format!("parameter {k} = {v} is not finite"),
        });
    }
    let steps = spec.frames - 1 + kbm.horizon;
    let mut draw = Draw::new(spec, template);
    let mut agents = Vec::new();
    let mut nav = NavCommand::Straight;
    let mut ttc_override = None;
    let half = EGO_LENGTH / 2.0;

    let controller: Expert = match template {
        Template::EmptyRoad => {
            let v0 = draw.range("v0", 3.0, 12.0);
            require(&id, (0.0..=30.0).contains(&v0), || format!("v0 {v0} outside [0, 30]"))?;
            let cruise_speed = v0.min(ROAD_SPEED_LIMIT);
            Box::new(move |s, _| ControlStep::new(cruise(s.v, cruise_speed), 0.0))
        }
        Template::LeadVehicle => {
            let v0 = draw.range("v0", 5.0, 11.0);
            let lead_speed = draw.range("lead_speed", 0.0, 3.0);
            let headway = draw.range("headway", 1.4, 2.4);
            let min_gap = (v0 * v0 - lead_speed * lead_speed).max(0.0) / 6.0 + 3.0;
            let gap = draw.derived("gap", (headway * v0).max(min_gap));
            require(&id, v0 >= 0.0 && lead_speed >= 0.0 && gap > 0.0, || "need v0, lead_speed >= 0 and gap > 0".into())?;
            let lead = Agent {
                id: 1,
                category: Category::Vehicle,
                length: VEHICLE_LENGTH,
                width: VEHICLE_WIDTH,
                x0: 0.0,
                y0: half + gap + VEHICLE_LENGTH / 2.0,
                heading: FRAC_PI_2,
                speed: lead_speed,
            };
            agents.push(lead.clone());
            let p = *kbm;
            Box::new(move |s, t| {
                // Intelligent-driver-model following with a hard stop limit.
                let lead_rear = lead.pose_at(t).y - VEHICLE_LENGTH / 2.0;
                let s_gap = (lead_rear - s.y - half).max(0.01);
                let dv = s.v - lead_speed;
                let desired = 2.5 + s.v * 1.0 + s.v * dv / (2.0 * (1.5f64 * 2.0).sqrt());
                let idm = 1.5 * (1.0 - (s.v / v0.max(0.1)).powi(4) - (desired.max(0.0) / s_gap).powi(2));
                // Never plan to pass the point 2 m behind a stopped lead.
                let stop = if lead_speed < 0.1 { stop_within(s.v, s_gap - 2.0) } else { idm };
                ControlStep::new(idm.min(stop).clamp(-p.accel_max, p.accel_max), pursue_lane(s, 0.0, &p))
            })
        }
        Template::PedestrianCrossing => {
            let v0 = draw.range("v0", 5.0, 9.0);
            let headway = draw.range("headway", 1.3, 2.2);
            let walk = draw.range("walk_speed", 0.9, 1.5);
            let side = draw.sign("side").map_err(|reason| HarnessError::InvalidParam { scenario: id.clone(), reason })?;
            let gap = draw.derived("gap", (headway * v0).max(v0 * v0 / 6.0 + 2.0));
            let ped_x = draw.derived("ped_x", side * (LANE_WIDTH / 2.0 + 1.0));
            ttc_override = draw.optional("ttc");
            require(&id, v0 >= 0.0 && gap > 0.0 && walk > 0.0, || "need v0 >= 0, gap > 0, walk_speed > 0".into())?;
            if let Some(t) = ttc_override {
                require(&id, t > 0.0, || format!("ttc {t} must be > 0"))?;
            }
            // Enter from `side` (+1 = right) and walk toward the other side.
            let dir = -side;
            let ped = Agent {
                id: 1,
                category: Category::Pedestrian,
                length: PEDESTRIAN_SIZE,
                width: PEDESTRIAN_SIZE,
                x0: ped_x,
                y0: half + gap + PEDESTRIAN_SIZE / 2.0,
                heading: if dir < 0.0 { PI } else { 0.0 },
                speed: walk,
            };
            agents.push(ped.clone());
            let p = *kbm;
            let stop_y = ped.y0 - PEDESTRIAN_SIZE / 2.0 - half - 1.5;
            // Hold the stop until the pedestrian reaches the far kerb.
            let far_kerb = LANE_WIDTH / 2.0 + 1.0;
            Box::new(move |s, t| {
                let px = ped.pose_at(t).x;
                let passed = dir * px > far_kerb;
                let behind_us = s.y - half > ped.y0 + PEDESTRIAN_SIZE;
                let a = if passed || behind_us {
                    cruise(s.v, v0)
                } else {
                    stop_within(s.v, stop_y - s.y).min(-YIELD_DECEL)
                };
                ControlStep::new(a.clamp(-p.accel_max, p.accel_max), pursue_lane(s, 0.0, &p))
            })
        }
        Template::LaneChange => {
            let v0 = draw.range("v0", 7.0, 12.0);
            let dir = draw.sign("direction").map_err(|reason| HarnessError::InvalidParam { scenario: id.clone(), reason })?;
            let start = draw.range("start", 0.0, 1.5);
            let gap = draw.range("gap", 18.0, 30.0);
            let slower = draw.range("lead_slower", 2.0, 4.0);
            require(&id, v0 >= 0.0 && gap > 0.0, || "need v0 >= 0 and gap > 0".into())?;
            agents.push(Agent {
                id: 1,
                category: Category::Vehicle,
                length: VEHICLE_LENGTH,
                width: VEHICLE_WIDTH,
                x0: 0.0,
                y0: half + gap + VEHICLE_LENGTH / 2.0,
                heading: FRAC_PI_2,
                speed: (v0 - slower).max(0.0),
            });
            let p = *kbm;
            // direction +1 is a change to the left lane, at -x.
            let target = -dir * LANE_WIDTH;
            Box::new(move |s, t| {
                let lane = if t >= start { target } else { 0.0 };
                let a = cruise(s.v, v0.min(ROAD_SPEED_LIMIT));
                ControlStep::new(a.clamp(-p.accel_max, p.accel_max), pursue_lane(s, lane, &p))
            })
        }
        Template::IntersectionTurn => {
            let v0 = draw.range("v0", 6.0, 10.0);
            let dir = draw.sign("direction").map_err(|reason| HarnessError::InvalidParam { scenario: id.clone(), reason })?;
            let radius = draw.range("radius", 8.0, 14.0);
            let approach = draw.range("approach", 4.0, 10.0);
            require(&id, radius * kbm.max_curvature() >= 1.0, || {
                format!("radius {radius} below the minimum turning radius {}", 1.0 / kbm.max_curvature())
            })?;
            require(&id, v0 >= 0.0 && approach >= 0.0, || "need v0 >= 0 and approach >= 0".into())?;
            nav = if dir > 0.0 { NavCommand::Left } else { NavCommand::Right };
            let p = *kbm;
            let v_turn = v0.min((2.0 * radius).sqrt());
            let exit_heading = wrap_angle(FRAC_PI_2 + dir * FRAC_PI_2);
            let kappa = 1.0 / radius;
            Box::new(move |s, _| {
                let remaining = wrap_angle(exit_heading - s.heading);
                let turning = s.y >= approach && remaining.abs() > 1e-6;
                if !turning {
                    let a = if s.y < approach {
                        let d = approach - s.y;
                        ((v_turn * v_turn - s.v * s.v) / (2.0 * d.max(0.5))).min(cruise(s.v, v0))
                    } else {
                        cruise(s.v, v_turn)
                    };
                    let steer = if s.y >= approach {
                        // Hold the exit heading after the turn.
                        let e = wrap_angle(exit_heading - s.heading);
                        (p.wheelbase * e / (s.v * p.dt).max(0.5)).atan()
                    } else {
                        pursue_lane(s, 0.0, &p)
                    };
                    return ControlStep::new(a.clamp(-p.accel_max, p.accel_max), steer.clamp(-p.steer_max, p.steer_max));
                }
                // Finish the turn exactly when less than one step of arc remains.
                let arc = s.v * p.dt;
                let k = if arc * kappa > remaining.abs() { remaining.abs() / arc.max(1e-9) } else { kappa };
                let steer = dir * (p.wheelbase * k).atan();
                ControlStep::new(cruise(s.v, v_turn).clamp(-p.accel_max, p.accel_max), steer.clamp(-p.steer_max, p.steer_max))
            })
        }
    };
    let params = draw.finish(&id)?;
    let v0 = params["v0"];

    let (expert, expert_controls) = simulate(VehicleState::new(0.0, 0.0, v0, FRAC_PI_2), steps, kbm, controller);
    let scenario = Scenario {
        id,
        spec: spec.clone(),
        template,
        params,
        nav,
        lane_width: LANE_WIDTH,
        ego_length: EGO_LENGTH,
        ego_width: EGO_WIDTH,
        kbm: *kbm,
        frames: spec.frames,
        agents,
        expert,
        expert_controls,
        ttc_override,
    };
    check_expert(&scenario)?;
    Ok(scenario)
}

/// Expert control law: state and time to the held control.
type Expert<'a> = Box<dyn FnMut(&VehicleState, f64) -> ControlStep + 'a>;

fn simulate(
    start: VehicleState,
    steps: usize,
    p: &KbmParams,
    mut controller: Expert<'_>,
) -> (Vec<Waypoint>, Vec<ControlStep>) {
    let mut s = start;
    let mut log = vec![Waypoint {
        t: 0.0,
        x: s.x,
        y: s.y,
        v: s.v,
        heading: s.heading,
    }];
    let mut controls = Vec::with_capacity(steps);
    for k in 0..steps {
        let raw = controller(&s, k as f64 * p.dt);
        let c = ControlStep::new(raw.accel.clamp(-p.accel_max, p.accel_max), raw.steer.clamp(-p.steer_max, p.steer_max));
        s = rk2_step(&s, &c, p);
        controls.push(c);
        log.push(Waypoint {
            t: (k + 1) as f64 * p.dt,
            x: s.x,
            y: s.y,
            v: s.v,
            heading: s.heading,
        });
    }
    (log, controls)
}

/// Bounds, curvature and collision-freedom of the expert log.
fn check_expert(scn: &Scenario) -> Result<(), HarnessError> {
    let fail = |reason: String| {
        Err(HarnessError::InfeasibleExpert {
            scenario: scn.id.clone(),
            reason,
        })
    };
    let p = &scn.kbm;
    if let Some((k, c)) = scn.expert_controls.iter().enumerate().find(|(_, c)| !c.within(p)) {
        return fail(format!("control {k} ({}, {}) outside bounds", c.accel, c.steer));
    }
    let start = scn.expert[0].state();
    let traj = Trajectory {
        waypoints: scn.expert[1..].to_vec(),
    };
    let limit = p.max_curvature() + 1e-6;
    if let Some((k, c)) = implied_curvatures(&start, &traj, p.dt).into_iter().enumerate().find(|(_, c)| *c > limit) {
        return fail(format!("curvature {c} at step {k} exceeds {limit}"));
    }
    if let Some((t, agent)) = scn.first_collision(&Trajectory {
        waypoints: scn.expert.clone(),
    }) {
        return fail(format!("expert collides with agent {agent} at t = {t}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn kbm() -> KbmParams {
        KbmParams::default()
    }

    #[test]
    fn empty_road_is_constant_speed_line() {
        let s = build_scenario(&ScenarioSpec::new(Template::EmptyRoad, 1).with("v0", 8.0), &kbm()).unwrap();
        assert!(s.agents.is_empty());
        for w in &s.expert {
            assert_abs_diff_eq!(w.x, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(w.y, 8.0 * w.t, epsilon = 1e-9);
            assert_abs_diff_eq!(w.v, 8.0, epsilon = 1e-12);
        }
        assert_eq!(s.expert.len(), s.frames + s.kbm.horizon);
    }

    #[test]
    fn free_road_settles_to_the_speed_limit() {
        let s = build_scenario(&ScenarioSpec::new(Template::EmptyRoad, 1).with("v0", 11.0), &kbm()).unwrap();
        let v: Vec<f64> = s.expert.iter().map(|w| w.v).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        assert!(v.iter().all(|&x| x >= ROAD_SPEED_LIMIT));
        assert!(v.last().unwrap() - ROAD_SPEED_LIMIT < 1.0);
    }

    #[test]
    fn unknown_template_and_param() {
        let mut spec = ScenarioSpec::new(Template::EmptyRoad, 0);
        spec.template = "roundabout".into();
        assert!(matches!(build_scenario(&spec, &kbm()), Err(HarnessError::UnknownTemplate(_))));
        let spec = ScenarioSpec::new(Template::EmptyRoad, 0).with("banana", 1.0);
        assert!(matches!(build_scenario(&spec, &kbm()), Err(HarnessError::InvalidParam { .. })));
    }

    #[test]
    fn case_study_geometry() {
        let s = build_scenario(&ScenarioSpec::case_study(), &kbm()).unwrap();
        let ped = &s.agents[0];
        assert_eq!(ped.category, Category::Pedestrian);
        // Near edge of the pedestrian 4.5 m ahead of the ego front bumper.
        let near = ped.y0 - ped.length / 2.0;
        assert_abs_diff_eq!(near - EGO_LENGTH / 2.0, 4.5, epsilon = 1e-12);
        assert_eq!(s.ttc_override, Some(0.89));
        assert_abs_diff_eq!(s.expert[0].v, 6.9);
        // The expert brakes from the first step.
        assert!(s.expert_controls[0].accel < -3.0);
    }

    #[test]
    fn seeds_are_distinct_and_replayable() {
        let p = kbm();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..100 {
            let spec = ScenarioSpec::new(Template::LaneChange, seed);
            let a = build_scenario(&spec, &p).unwrap();
            let b = build_scenario(&spec, &p).unwrap();
            assert_eq!(a, b);
            seen.insert(format!("{:?}", a.params));
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn pinning_one_param_keeps_the_others() {
        let p = kbm();
        let free = build_scenario(&ScenarioSpec::new(Template::LaneChange, 5), &p).unwrap();
        let pinned = build_scenario(&ScenarioSpec::new(Template::LaneChange, 5).with("v0", 9.5), &p).unwrap();
        assert_eq!(pinned.params["v0"], 9.5);
        assert_eq!(pinned.params["gap"], free.params["gap"]);
        assert_eq!(pinned.params["start"], free.params["start"]);
    }

    #[test]
    fn every_template_builds_feasible_experts() {
        let p = kbm();
        for t in Template::ALL {
            for seed in 0..40 {
                let s = build_scenario(&ScenarioSpec::new(t, seed), &p).unwrap_or_else(|e| panic!("{t} seed {seed}: {e}"));
                assert!(s.expert.iter().all(|w| w.v >= 0.0));
            }
        }
    }

    #[test]
    fn turn_reaches_exit_heading() {
        let spec = ScenarioSpec::new(Template::IntersectionTurn, 3)
            .with("direction", 1.0)
            .with("approach", 2.0)
            .with("radius", 8.0)
            .with("v0", 6.0);
        let mut spec = spec;
        spec.frames = 8;
        let s = build_scenario(&spec, &kbm()).unwrap();
        assert_eq!(s.nav, NavCommand::Left);
        let last = s.expert.last().unwrap();
        assert_abs_diff_eq!(wrap_angle(last.heading - PI), 0.0, epsilon = 1e-3);
        assert!(last.x < -5.0);
    }

    #[test]
    fn expert_local_starts_at_origin_frame() {
        let s = build_scenario(&ScenarioSpec::new(Template::LaneChange, 2), &kbm()).unwrap();
        let local0 = s.expert_local(0);
        for (l, w) in local0.waypoints.iter().zip(&s.expert[1..]) {
            assert_abs_diff_eq!(l.x, w.x, epsilon = 1e-12);
            assert_abs_diff_eq!(l.y, w.y, epsilon = 1e-12);
        }
        let f = 2;
        let local = s.expert_local(f);
        let pose = s.ego_pose(f);
        for (l, w) in local.waypoints.iter().zip(&s.expert[f + 1..]) {
            let (x, y) = pose.to_world(l.x, l.y);
            assert_abs_diff_eq!(x, w.x, epsilon = 1e-9);
            assert_abs_diff_eq!(y, w.y, epsilon = 1e-9);
        }
    }
}
