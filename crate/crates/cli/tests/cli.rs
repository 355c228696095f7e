//! End-to-end tests of the `nsplan` binary with a small model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsplan_core::conditioning::Model;
use nsplan_core::config::RunConfig;
use nsplan_core::harness::{read_traces, METRICS_HEADER};
use nsplan_core::kbm::KbmParams;
use tempfile::TempDir;

const SMALL: &str = r#"
suite = "case_study"
train_suite = "case_study"

[model]
modes = 6
dim = 8
hidden = 4

[train]
stage1_epochs = 1
stage2_epochs = 1
batch_size = 2
"#;

fn nsplan(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nsplan"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    // Keep the caller's environment from leaking overrides into the test.
    for k in ["NSPLAN_CONFIG", "NSPLAN_SUITE", "NSPLAN_SEED", "NSPLAN_ABLATE", "NSPLAN_GENERATOR", "NSPLAN_OUT", "NSPLAN_WEIGHTS", "NSPLAN_FRAME"] {
        if !envs.iter().any(|(e, _)| *e == k) {
            cmd.env_remove(k);
        }
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

fn run(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let cfg = small_config(dir);
    let out = dir.join(out);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = nsplan(&args, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn run_writes_metrics_traces_weights_and_config() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "a", &[]);
    let csv = read(&out.join("metrics.csv"));
    assert_eq!(csv.lines().next().unwrap(), METRICS_HEADER);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().last().unwrap().starts_with("aggregate,"));
    for f in ["traces/case_study.jsonl", "weights.json", "loss.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let traces = read_traces(&read(&out.join("traces/case_study.jsonl"))).unwrap();
    assert_eq!(traces.len(), 4);
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let a = run(dir.path(), "a", &["--seed", "5"]);
    let b = run(dir.path(), "b", &["--seed", "5"]);
    for f in ["metrics.csv", "traces/case_study.jsonl", "weights.json", "loss.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let c = run(dir.path(), "c", &["--seed", "6"]);
    assert_ne!(read(&a.join("weights.json")), read(&c.join("weights.json")));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let a = run(dir.path(), "a", &["--seed", "3", "--ablate", "no-smoothing"]);
    let echoed = RunConfig::load(&a.join("config.toml")).unwrap();
    assert_eq!(echoed.model.seed, 3);
    let b = dir.path().join("b");
    let o = nsplan(
        &["run", "--config", a.join("config.toml").to_str().unwrap(), "--out", b.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("metrics.csv")), read(&b.join("metrics.csv")));
    assert_eq!(read(&a.join("traces/case_study.jsonl")), read(&b.join("traces/case_study.jsonl")));
}

#[test]
fn no_asp_fixes_the_decision() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "a", &["--ablate", "no-asp"]);
    for t in read_traces(&read(&out.join("traces/case_study.jsonl"))).unwrap() {
        let d = &t.reasoning.decision;
        assert_eq!((d.action.to_string(), d.speed.to_string()), ("keep_lane".into(), "current".into()));
        assert_eq!(d.winning_suggestion, "ablation:no-asp");
        assert!(t.reasoning.suggestions.is_empty());
    }
}

#[test]
fn trace_renders_and_replays() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "a", &[]);
    let path = out.join("traces/case_study.jsonl");
    let p = path.to_str().unwrap();

    let o = nsplan(&["trace", p, "--frame", "0"], &[]);
    assert!(o.status.success());
    let text = stdout(&o);
    for h in ["[1] facts", "[2] suggestions", "[3] conditioning", "decision: yield at zero (safety tier"] {
        assert!(text.contains(h), "{h}:\n{text}");
    }

    let o = nsplan(&["trace", p, "--replay"], &[]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("replayed 4 frames: identical"));

    let missing = nsplan(&["trace", p, "--frame", "9"], &[]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("frame 9 not in trace"));

    // A tampered recording no longer replays.
    let mut lines: Vec<String> = read(&path).lines().map(String::from).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
    v["plan"]["b_v"] = serde_json::json!(123.0);
    lines[1] = v.to_string();
    let bad = dir.path().join("a/traces/tampered.jsonl");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = nsplan(&["trace", bad.to_str().unwrap(), "--replay"], &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stdout(&o).contains("plan.b_v"), "{}", stdout(&o));
}

#[test]
fn environment_overrides_apply() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("env");
    let o = nsplan(
        &["run"],
        &[
            ("NSPLAN_CONFIG", cfg.to_str().unwrap()),
            ("NSPLAN_OUT", out.to_str().unwrap()),
            ("NSPLAN_ABLATE", "no-kbm-residual"),
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echoed = read(&out.join("config.toml"));
    assert!(echoed.contains("ablation = \"no-kbm-residual\""), "{echoed}");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    for args in [
        vec!["run", "--config", bad.to_str().unwrap()],
        vec!["run", "--config", "/nonexistent/config.toml"],
        vec!["run", "--ablate", "everything"],
        vec!["run", "--generator", "ftp:x"],
        vec!["run", "--suite", "no_such_suite"],
    ] {
        let o = nsplan(&args, &[]);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = nsplan(&["trace", "/nonexistent/trace.jsonl"], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_learning_rate_checkpoint_equals_initialisation() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("t");
    let o = nsplan(
        &["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        &[("NSPLAN_SEED", "9")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&out.join("loss.csv")).lines().count() > 1);

    let zero = dir.path().join("zero.toml");
    fs::write(&zero, SMALL.replace("[train]", "[train]\nlearning_rate = 0.0")).unwrap();
    let out0 = dir.path().join("t0");
    let o = nsplan(&["train", "--config", zero.to_str().unwrap(), "--out", out0.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let cfg = RunConfig::from_toml(SMALL).unwrap();
    let init = Model::new(cfg.model, KbmParams::default()).unwrap();
    assert_eq!(read(&out0.join("weights.json")), init.to_checkpoint_json());
}

#[test]
fn failing_checks_exit_4() {
    let dir = TempDir::new().unwrap();
    let untrained = dir.path().join("untrained.toml");
    fs::write(&untrained, SMALL.replace("stage1_epochs = 1", "stage1_epochs = 0").replace("stage2_epochs = 1", "stage2_epochs = 0")).unwrap();
    let out = dir.path().join("c");
    let o = nsplan(&["check", "--config", untrained.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("[FAIL] case study"), "{text}");
    assert!(text.contains("[PASS] determinism and replay"), "{text}");
}
