//! Oriented rectangles, separating-axis overlap and planar poses.

use serde::{Deserialize, Serialize};

use crate::kbm::wrap_angle;

/// Planar pose; `heading` is measured from +x, counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    /// Express a world point in the planning frame anchored at this pose
    /// (x lateral to the right, y forward).
    pub fn to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = (self.heading - std::f64::consts::FRAC_PI_2).sin_cos();
        let (dx, dy) = (wx - self.x, wy - self.y);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Inverse of [`Pose::to_local`].
    pub fn to_world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = (self.heading - std::f64::consts::FRAC_PI_2).sin_cos();
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }

    pub fn heading_to_local(&self, world_heading: f64) -> f64 {
        wrap_angle(world_heading - self.heading + std::f64::consts::FRAC_PI_2)
    }

    pub fn heading_to_world(&self, local_heading: f64) -> f64 {
        wrap_angle(local_heading + self.heading - std::f64::consts::FRAC_PI_2)
    }
}

/// Rectangle centred at `(cx, cy)`; `length` runs along `heading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, heading: f64, length: f64, width: f64) -> Self {
        OrientedBox {
            cx,
            cy,
            heading,
            length,
            width,
        }
    }

    fn axes(&self) -> [(f64, f64); 2] {
        let (s, c) = self.heading.sin_cos();
        [(c, s), (-s, c)]
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)].map(|(a, b)| {
            (self.cx + a * hl * ux + b * hw * vx, self.cy + a * hl * uy + b * hw * vy)
        })
    }

    fn project(&self, axis: (f64, f64)) -> (f64, f64) {
        let c = self.cx * axis.0 + self.cy * axis.1;
        let [(ux, uy), (vx, vy)] = self.axes();
        let r = self.length / 2.0 * (ux * axis.0 + uy * axis.1).abs() + self.width / 2.0 * (vx * axis.0 + vy * axis.1).abs();
        (c - r, c + r)
    }

    /// Strict interior overlap by the separating-axis test; boxes that only
    /// touch along an edge or at a corner do not overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        self.axes().into_iter().chain(other.axes()).all(|axis| {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            a1 > b0 && b1 > a0
        })
    }

    /// Closed containment test.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let [(ux, uy), (vx, vy)] = self.axes();
        let (dx, dy) = (px - self.cx, py - self.cy);
        (dx * ux + dy * uy).abs() <= self.length / 2.0 && (dx * vx + dy * vy).abs() <= self.width / 2.0
    }

    /// Euclidean gap between the two rectangles; zero when they touch or
    /// overlap.
    pub fn gap(&self, other: &OrientedBox) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let a = self.corners();
        let b = other.corners();
        let mut best = f64::INFINITY;
        for i in 0..4 {
            let (p0, p1) = (a[i], a[(i + 1) % 4]);
            let (q0, q1) = (b[i], b[(i + 1) % 4]);
            for &p in &b {
                best = best.min(point_segment_distance(p, p0, p1));
            }
            for &p in &a {
                best = best.min(point_segment_distance(p, q0, q1));
            }
        }
        best
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}
