//! Independent reference integrators and finite-difference helpers.
#![allow(dead_code)]

use nsplan_core::kbm::{ControlStep, KbmParams, VehicleState};
use nsplan_core::predicate::ParseError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn deriv(s: &[f64; 4], c: &ControlStep, wheelbase: f64) -> [f64; 4] {
    [
        s[2] * s[3].cos(),
        s[2] * s[3].sin(),
        c.accel,
        s[2] * c.steer.tan() / wheelbase,
    ]
}

fn to_arr(s: &VehicleState) -> [f64; 4] {
    [s.x, s.y, s.v, s.heading]
}

fn to_state(a: [f64; 4]) -> VehicleState {
    VehicleState::new(a[0], a[1], a[2], a[3])
}

/// Forward Euler with step `h`, each control held for `p.dt`. Returns the
/// state at the end of every control interval. Heading is left unwrapped.
pub fn euler_oracle(s0: &VehicleState, controls: &[ControlStep], p: &KbmParams, h: f64) -> Vec<VehicleState> {
    let n = (p.dt / h).round() as usize;
    let mut s = to_arr(s0);
    let mut out = Vec::new();
    for c in controls {
        for _ in 0..n {
            let d = deriv(&s, c, p.wheelbase);
            for i in 0..4 {
                s[i] += h * d[i];
            }
            s[2] = s[2].max(0.0);
        }
        out.push(to_state(s));
    }
    out
}

/// Classical RK4 with step `h`; for smooth problems away from the speed
/// clamp it is accurate to well below anything RK2 can resolve.
pub fn rk4_oracle(s0: &VehicleState, controls: &[ControlStep], p: &KbmParams, h: f64) -> Vec<VehicleState> {
    let n = (p.dt / h).round() as usize;
    let mut s = to_arr(s0);
    let mut out = Vec::new();
    let add = |s: &[f64; 4], k: &[f64; 4], f: f64| [s[0] + f * k[0], s[1] + f * k[1], s[2] + f * k[2], s[3] + f * k[3]];
    for c in controls {
        for _ in 0..n {
            let k1 = deriv(&s, c, p.wheelbase);
            let k2 = deriv(&add(&s, &k1, h / 2.0), c, p.wheelbase);
            let k3 = deriv(&add(&s, &k2, h / 2.0), c, p.wheelbase);
            let k4 = deriv(&add(&s, &k3, h), c, p.wheelbase);
            for i in 0..4 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        out.push(to_state(s));
    }
    out
}

pub fn position_error(a: &VehicleState, b: &VehicleState) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Relative error 1e-4 with an absolute floor of 1e-7.
pub fn fd_agrees(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-7 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Well-formed fact and suggestion documents the fuzzer mutates.
pub fn fuzz_corpus() -> Vec<&'static [u8]> {
    vec![
        b"ego(6.9, 0.0, straight).\nobject(3, pedestrian, 4.5, 1.2, 1.57, front, crossing, 0.89).\n",
        b"frame(\"a#0\").\nego(1.0, -0.5, left, 2).\nhistory(1.0, 2.0).\nobject(1, vehicle, 10.0, 3.0, 0.0, rear, moving, inf).\n",
        b"suggestion(yield, zero, safety).\nsuggestion(keep_lane, normal, comfort).\n",
        b"% comment\nsuggestion(emergency_stop, zero, emergency).",
    ]
}

pub fn has_position(e: &ParseError) -> bool {
    let text = e.to_string();
    match e {
        ParseError::InvalidUtf8 { .. } => text.contains("byte"),
        ParseError::MissingEgo => true,
        _ => text.split(':').take(2).all(|p| p.trim().parse::<usize>().is_ok()),
    }
}

/// Byte strings biased toward the grammar's alphabet so the fuzz reaches
/// deep parser states, not just the first character.
pub fn fuzz_input(rng: &mut ChaCha8Rng, corpus: &[&[u8]]) -> Vec<u8> {
    const ALPHABET: &[u8] = b"(),.\"\\ \n\t-+eE0123456789abcdefghijklmnopqrstuvwxyz_%:infego";
    match rng.random_range(0..4) {
        0 => (0..rng.random_range(0..64)).map(|_| rng.random::<u8>()).collect(),
        1 => (0..rng.random_range(0..96)).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect(),
        _ => {
            let mut v = corpus[rng.random_range(0..corpus.len())].to_vec();
            for _ in 0..rng.random_range(1..6) {
                let i = rng.random_range(0..=v.len());
                match rng.random_range(0..3) {
                    0 if i < v.len() => v[i] = rng.random(),
                    1 if i < v.len() => {
                        v.remove(i);
                    }
                    _ => v.insert(i, ALPHABET[rng.random_range(0..ALPHABET.len())]),
                }
            }
            v
        }
    }
}
