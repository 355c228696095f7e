//! Neuro-symbolic motion planning.
//!
//! A frame flows through four stages:
//!
//! 1. [`predicate`]: scene facts in a small answer-set-style text format.
//! 2. [`rules`]: candidate suggestions from a pluggable generator plus
//!    built-in safety axioms, arbitrated by a fixed five-tier priority into
//!    one [`FinalDecision`](predicate::FinalDecision).
//! 3. [`conditioning`]: the decision offsets the planning query and biases
//!    the initial speed; a small head predicts controls and a bounded
//!    residual.
//! 4. [`kbm`]: a kinematic bicycle model integrates the controls (RK2) into
//!    the physics baseline, with exact forward-mode Jacobians.
//!
//! [`harness`] builds synthetic scenarios, scores plans (L2, collision, TPC)
//! and records replayable reasoning traces. [`config`] gathers every knob a
//! run depends on and [`checks`] holds end-to-end behaviour checks.

pub mod checks;
pub mod conditioning;
pub mod config;
pub mod harness;
pub mod kbm;
pub mod predicate;
pub mod rules;
