//! L2 displacement, collision and trajectory prediction consistency (TPC).

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::kbm::{Trajectory, Waypoint};

use super::scenario::Scenario;
use super::HarnessError;

/// Horizons at which displacement metrics are read, s.
pub const HORIZONS_S: [f64; 3] = [1.0, 2.0, 3.0];
const TIME_EPS: f64 = 1e-9;

pub const METRICS_HEADER: &str = "scenario,l2_1s,l2_2s,l2_3s,l2_avg,col_rate,tpc_1s,tpc_2s,tpc_3s,tpc_avg";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub at_1s: f64,
    pub at_2s: f64,
    pub at_3s: f64,
    pub avg: f64,
}

impl HorizonMetrics {
    pub fn from_values(v: [f64; 3]) -> Self {
        HorizonMetrics {
            at_1s: v[0],
            at_2s: v[1],
            at_3s: v[2],
            avg: (v[0] + v[1] + v[2]) / 3.0,
        }
    }

    pub fn values(&self) -> [f64; 3] {
        [self.at_1s, self.at_2s, self.at_3s]
    }
}

fn nearest(traj: &Trajectory, t: f64) -> Option<&Waypoint> {
    traj.waypoints.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
}

/// Euclidean distance at the waypoints nearest 1, 2 and 3 s.
pub fn l2_metric(pred: &Trajectory, expert: &Trajectory) -> Result<HorizonMetrics, HarnessError> {
    if pred.len() != expert.len() || pred.is_empty() {
        return Err(HarnessError::HorizonMismatch {
            expected: expert.len(),
            found: pred.len(),
        });
    }
    if let Some((p, e)) = pred.waypoints.iter().zip(&expert.waypoints).find(|(p, e)| (p.t - e.t).abs() > TIME_EPS) {
        return Err(HarnessError::TimeMismatch { pred: p.t, expert: e.t });
    }
    let mut v = [0.0; 3];
    for (slot, h) in v.iter_mut().zip(HORIZONS_S) {
        let i = pred
            .waypoints
            .iter()
            .position(|w| std::ptr::eq(w, nearest(pred, h).unwrap()))
            .unwrap();
        let (p, e) = (&pred.waypoints[i], &expert.waypoints[i]);
        *slot = (p.x - e.x).hypot(p.y - e.y);
    }
    Ok(HorizonMetrics::from_values(v))
}

/// Planning-frame trajectory of `frame` placed in the world, with absolute
/// waypoint times.
pub fn to_world(scn: &Scenario, frame: usize, local: &Trajectory) -> Trajectory {
    let pose = scn.ego_pose(frame);
    let t0 = scn.frame_time(frame);
    Trajectory {
        waypoints: local
            .waypoints
            .iter()
            .map(|w| {
                let (x, y) = pose.to_world(w.x, w.y);
                Waypoint {
                    t: t0 + w.t,
                    x,
                    y,
                    v: w.v,
                    heading: pose.heading_to_world(w.heading),
                }
            })
            .collect(),
    }
}

/// Whether the ego box along `pred` (planning frame of `frame`) strictly
/// overlaps any agent box at any of the future waypoints.
pub fn collision_metric(pred: &Trajectory, scn: &Scenario, frame: usize) -> bool {
    scn.first_collision(&to_world(scn, frame, pred)).is_some()
}

/// A plan in world coordinates together with the time it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldPlan {
    pub t0: f64,
    pub trajectory: Trajectory,
}

/// Squared deviations of time-aligned waypoints between adjacent plans,
/// bucketed by horizon relative to the earlier plan.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TpcAccumulator {
    sum_sq: [f64; 3],
    count: [usize; 3],
}

impl TpcAccumulator {
    pub fn add_pair(&mut self, a: &WorldPlan, b: &WorldPlan) {
        for (bucket, h) in HORIZONS_S.iter().enumerate() {
            let t = a.t0 + h;
            let pa = a.trajectory.waypoints.iter().find(|w| (w.t - t).abs() < TIME_EPS);
            let pb = b.trajectory.waypoints.iter().find(|w| (w.t - t).abs() < TIME_EPS);
            if let (Some(pa), Some(pb)) = (pa, pb) {
                self.sum_sq[bucket] += (pa.x - pb.x).powi(2) + (pa.y - pb.y).powi(2);
                self.count[bucket] += 1;
            }
        }
    }

    pub fn merge(&mut self, o: &TpcAccumulator) {
        for i in 0..3 {
            self.sum_sq[i] += o.sum_sq[i];
            self.count[i] += o.count[i];
        }
    }

    pub fn pairs(&self) -> usize {
        self.count[0]
    }

    pub fn report(&self) -> HorizonMetrics {
        let v = std::array::from_fn(|i| match self.count[i] {
            0 => 0.0,
            n => (self.sum_sq[i] / n as f64).sqrt(),
        });
        HorizonMetrics::from_values(v)
    }
}

/// RMS deviation between consecutive plans at the times both cover.
pub fn tpc_metric(plans: &[WorldPlan]) -> Result<HorizonMetrics, HarnessError> {
    if plans.len() < 2 {
        return Err(HarnessError::InsufficientFrames(plans.len()));
    }
    let mut acc = TpcAccumulator::default();
    for w in plans.windows(2) {
        acc.add_pair(&w[0], &w[1]);
    }
    Ok(acc.report())
}

/// Aggregated metrics over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub l2: HorizonMetrics,
    pub collision_rate: f64,
    pub tpc: HorizonMetrics,
    pub frames: usize,
    pub collisions: usize,
}

/// Running sums behind a [`MetricsReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsAccumulator {
    l2_sum: [f64; 3],
    frames: usize,
    collisions: usize,
    tpc: TpcAccumulator,
}

impl MetricsAccumulator {
    pub fn add_frame(&mut self, l2: &HorizonMetrics, collided: bool) {
        for (s, v) in self.l2_sum.iter_mut().zip(l2.values()) {
            *s += v;
        }
        self.frames += 1;
        self.collisions += collided as usize;
    }

    pub fn add_pair(&mut self, a: &WorldPlan, b: &WorldPlan) {
        self.tpc.add_pair(a, b);
    }

    pub fn merge(&mut self, o: &MetricsAccumulator) {
        for i in 0..3 {
            self.l2_sum[i] += o.l2_sum[i];
        }
        self.frames += o.frames;
        self.collisions += o.collisions;
        self.tpc.merge(&o.tpc);
    }

    pub fn report(&self) -> MetricsReport {
        let n = self.frames.max(1) as f64;
        MetricsReport {
            l2: HorizonMetrics::from_values(self.l2_sum.map(|s| s / n)),
            collision_rate: self.collisions as f64 / n,
            tpc: self.tpc.report(),
            frames: self.frames,
            collisions: self.collisions,
        }
    }
}

fn csv_row(out: &mut String, name: &str, r: &MetricsReport) {
    let _ = writeln!(
        out,
        "{name},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r.l2.at_1s, r.l2.at_2s, r.l2.at_3s, r.l2.avg, r.collision_rate, r.tpc.at_1s, r.tpc.at_2s, r.tpc.at_3s, r.tpc.avg
    );
}

/// One row per scenario plus an `aggregate` row.
pub fn metrics_csv(rows: &[(String, MetricsReport)], aggregate: &MetricsReport) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (name, r) in rows {
        csv_row(&mut out, name, r);
    }
    csv_row(&mut out, "aggregate", aggregate);
    out
}
