//! Human-readable rendering of a recorded frame's reasoning chain.

use std::fmt::Write;

use super::pipeline::FrameTrace;
use super::HarnessError;

/// The frame with index `frame` from a trace file's frames.
pub fn find_frame(traces: &[FrameTrace], frame: usize) -> Result<&FrameTrace, HarnessError> {
    traces.iter().find(|t| t.frame == frame).ok_or_else(|| HarnessError::FrameNotFound {
        frame,
        available: traces.iter().map(|t| t.frame).collect(),
    })
}

/// Facts, then suggestions by tier and the arbitrated decision, then how the
/// decision conditioned the plan: velocity bias, query offset, controls and
/// waypoints.
pub fn render_frame(t: &FrameTrace) -> String {
    let mut out = String::new();
    let r = &t.reasoning;
    let p = &t.plan;
    let _ = writeln!(out, "frame {} (t = {:.2} s, ablation {})", t.frame_key(), t.t, t.ablation);
    let _ = writeln!(out, "weights {}", t.weights);

    let _ = writeln!(out, "\n[1] facts");
    for line in t.facts.lines() {
        let _ = writeln!(out, "    {line}");
    }

    let _ = writeln!(out, "\n[2] suggestions (generator {})", r.generator);
    if r.suggestions.is_empty() {
        let _ = writeln!(out, "    none (rule reasoning bypassed)");
    }
    for s in &r.suggestions {
        let won = s.provenance == r.decision.winning_suggestion
            && s.action == r.decision.action
            && s.speed == r.decision.speed
            && s.rule_type == r.decision.tier;
        let _ = writeln!(
            out,
            "  {} tier {} {:<44} from {}",
            if won { "*" } else { " " },
            s.rule_type.rank(),
            s.to_predicate(),
            s.provenance
        );
    }
    for note in &r.rejected {
        let _ = writeln!(out, "    rejected: {note}");
    }
    if let Some(e) = &r.generator_error {
        let _ = writeln!(out, "    generator error: {e}");
    }
    let d = &r.decision;
    let _ = writeln!(
        out,
        "    decision: {} at {} ({} tier, won by {})",
        d.action, d.speed, d.tier, d.winning_suggestion
    );

    let _ = writeln!(out, "\n[3] conditioning");
    let _ = writeln!(
        out,
        "    b_v {:+.3} m/s: v0 {:.3} -> {:.3} m/s",
        p.b_v,
        p.v0_prime - p.b_v,
        p.v0_prime
    );
    let _ = writeln!(out, "    decision offset |d| {:.4}, mode {}", p.decision_offset_norm, p.mode);
    let _ = writeln!(out, "    {:>5} {:>8} {:>8} {:>8} {:>8} {:>7}", "t", "accel", "steer", "x", "y", "v");
    for (c, w) in p.controls.iter().zip(&p.final_trajectory.waypoints) {
        let _ = writeln!(
            out,
            "    {:>5.2} {:>8.3} {:>8.4} {:>8.3} {:>8.3} {:>7.3}",
            w.t, c.accel, c.steer, w.x, w.y, w.v
        );
    }
    match t.collision {
        Some((time, agent)) => {
            let _ = writeln!(out, "    collision with agent {agent} at t = {time:.2} s");
        }
        None => {
            let _ = writeln!(out, "    no collision");
        }
    }
    let _ = writeln!(
        out,
        "    l2 {:.3} / {:.3} / {:.3} m at 1 / 2 / 3 s",
        t.l2.at_1s, t.l2.at_2s, t.l2.at_3s
    );
    out
}
