//! Canonical text form of [`SceneFacts`].
//!
//! Field order is fixed, reals carry 6 significant digits, and every
//! predicate sits on its own line. Values that already have at most six
//! significant digits (everything produced by [`parse_facts`] on canonical
//! text) round-trip exactly.
//!
//! [`parse_facts`]: super::parse_facts

use std::fmt::Write;

use super::facts::SceneFacts;

const SIG_DIGITS: usize = 6;

/// Round to 6 significant digits.
pub fn quantize(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return if v == 0.0 { 0.0 } else { v };
    }
    format!("{:.*e}", SIG_DIGITS - 1, v)
        .parse()
        .expect("scientific formatting always parses")
}

/// Decimal text for a real at 6 significant digits, always with a
/// fractional part (`7` prints as `7.0`).
pub fn format_real(v: f64) -> String {
    if v.is_infinite() {
        return "inf".to_string();
    }
    let q = quantize(v);
    let q = if q == 0.0 { 0.0 } else { q }; // drop the sign of -0.0
    let mut s = q.to_string();
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical predicate text, one predicate per line.
pub fn serialize_facts(f: &SceneFacts) -> String {
    let mut out = String::new();
    if !f.frame_id.is_empty() {
        let _ = writeln!(out, "frame({}).", quote(&f.frame_id));
    }
    let e = &f.ego;
    let _ = write!(out, "ego({}, {}, {}", format_real(e.speed), format_real(e.heading), e.nav);
    if e.lane_id != 0 {
        let _ = write!(out, ", {}", e.lane_id);
    }
    out.push_str(").\n");
    if !e.history_speeds.is_empty() {
        let items: Vec<_> = e.history_speeds.iter().map(|v| format_real(*v)).collect();
        let _ = writeln!(out, "history({}).", items.join(", "));
    }
    for o in &f.objects {
        let _ = writeln!(
            out,
            "object({}, {}, {}, {}, {}, {}, {}, {}).",
            o.id,
            o.category,
            format_real(o.distance),
            format_real(o.speed),
            format_real(o.heading),
            o.relative_pos,
            o.attribute,
            format_real(o.ttc),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::{parse_facts, EgoFacts, NavCommand};

    #[test]
    fn case_study_text() {
        let src = "ego(6.9, 0.0, straight).\nobject(3, pedestrian, 4.5, 1.2, 1.57, front, crossing, 0.89).\n";
        let f = parse_facts(src).unwrap();
        assert_eq!(serialize_facts(&f), src);
    }

    #[test]
    fn ego_only_single_line() {
        let f = SceneFacts::new(EgoFacts::new(8.0, 0.0, NavCommand::Straight));
        let text = serialize_facts(&f);
        assert_eq!(text, "ego(8.0, 0.0, straight).\n");
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(0.0), "0.0");
        assert_eq!(format_real(-0.0), "0.0");
        assert_eq!(format_real(10.0), "10.0");
        assert_eq!(format_real(1.0 / 3.0), "0.333333");
        assert_eq!(format_real(123456789.0), "123457000.0");
        assert_eq!(format_real(-2.5e-7), "-0.00000025");
        assert_eq!(format_real(f64::INFINITY), "inf");
    }

    #[test]
    fn quantize_is_idempotent() {
        for v in [1.0 / 3.0, 2.0f64.sqrt(), -1e-9 / 7.0, 6.9, std::f64::consts::PI] {
            let q = quantize(v);
            assert_eq!(quantize(q), q);
        }
    }

    #[test]
    fn quoted_frame_id() {
        let mut f = SceneFacts::new(EgoFacts::new(1.0, 0.0, NavCommand::Left));
        f.frame_id = "a \"b\" \\ c".into();
        let back = parse_facts(&serialize_facts(&f)).unwrap();
        assert_eq!(back, f);
    }
}
