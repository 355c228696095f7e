//! `nsplan`: run scenario suites, train checkpoints, render and replay
//! reasoning traces, and run behaviour checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 failed check (including a non-empty replay diff).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsplan_core::checks::{self, CheckResult};
use nsplan_core::conditioning::{train, Model, TrainLog};
use nsplan_core::config::{GeneratorSpec, RunConfig};
use nsplan_core::harness::{
    evaluate, find_frame, read_traces, render_frame, replay_traces, training_samples, Ablation, Planner, Scenario,
    Suite,
};

#[derive(Parser)]
#[command(name = "nsplan", version, about = "Rule-conditioned kinematic motion planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a suite: writes metrics.csv, traces/ and config.toml.
    Run(RunArgs),
    /// Train a checkpoint: writes weights.json, loss.csv and config.toml.
    Train(RunArgs),
    /// Run the end-to-end behaviour checks; exits 4 if any fails.
    Check(RunArgs),
    /// Render one frame of a trace file, or replay the whole file.
    Trace(TraceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, env = "NSPLAN_CONFIG")]
    config: Option<PathBuf>,
    /// Built-in suite name or suite TOML path.
    #[arg(long, env = "NSPLAN_SUITE")]
    suite: Option<String>,
    /// Seed for weight initialisation and batch order.
    #[arg(long, env = "NSPLAN_SEED")]
    seed: Option<u64>,
    /// none, no-asp, no-kbm-residual or no-smoothing.
    #[arg(long, env = "NSPLAN_ABLATE")]
    ablate: Option<Ablation>,
    /// template, cache:<dir> or http:<url>.
    #[arg(long, env = "NSPLAN_GENERATOR")]
    generator: Option<GeneratorSpec>,
    /// Output directory.
    #[arg(long, env = "NSPLAN_OUT")]
    out: Option<PathBuf>,
    /// Checkpoint to use instead of training one.
    #[arg(long, env = "NSPLAN_WEIGHTS")]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// A traces/<scenario>.jsonl file written by `run`.
    path: PathBuf,
    /// Frame index to render.
    #[arg(long, default_value_t = 0, env = "NSPLAN_FRAME")]
    frame: usize,
    /// Re-execute every frame and print differences from the recording.
    #[arg(long)]
    replay: bool,
    /// Checkpoint for replay; defaults to weights.json next to traces/.
    #[arg(long, env = "NSPLAN_WEIGHTS")]
    weights: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Check(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Check(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| runtime_err(format!("cannot write {}: {e}", path.display())))
}

fn resolve_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).map_err(config_err)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &args.suite {
        cfg.suite = s.clone();
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    if let Some(a) = args.ablate {
        cfg.ablation = a;
    }
    if let Some(g) = &args.generator {
        cfg.generator = g.clone();
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(w) = &args.weights {
        cfg.weights = Some(w.clone());
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn build_suite(name: &str, cfg: &RunConfig) -> Result<Vec<Scenario>, Failure> {
    Suite::resolve(name).and_then(|s| s.build(&cfg.kbm)).map_err(config_err)
}

fn train_model(cfg: &RunConfig) -> Result<(Model, TrainLog), Failure> {
    let scenarios = build_suite(&cfg.train_suite, cfg)?;
    let generator = cfg.generator.build();
    let samples = training_samples(&scenarios, generator.as_ref(), &cfg.arbitration).map_err(runtime_err)?;
    let mut model = Model::new(cfg.model.clone(), cfg.kbm).map_err(config_err)?;
    eprintln!("training on {} frames from suite {:?}", samples.len(), cfg.train_suite);
    let log = train(&mut model, &samples, &cfg.train_config()).map_err(runtime_err)?;
    Ok((model, log))
}

/// The configured checkpoint, or a freshly trained one saved to `out`.
fn obtain_model(cfg: &RunConfig) -> Result<Model, Failure> {
    if let Some(path) = &cfg.weights {
        return Model::load(path, &cfg.model, &cfg.kbm)
            .map_err(|e| config_err(format!("checkpoint {}: {e}", path.display())));
    }
    let (model, log) = train_model(cfg)?;
    save_training(cfg, &model, &log)?;
    Ok(model)
}

fn save_training(cfg: &RunConfig, model: &Model, log: &TrainLog) -> Result<String, Failure> {
    fs::create_dir_all(&cfg.out).map_err(runtime_err)?;
    let fp = model.save(&cfg.out.join("weights.json")).map_err(runtime_err)?;
    write(&cfg.out.join("loss.csv"), &log.to_csv())?;
    Ok(fp)
}

fn echo_config(cfg: &RunConfig) -> Result<(), Failure> {
    fs::create_dir_all(&cfg.out).map_err(runtime_err)?;
    write(&cfg.out.join("config.toml"), &cfg.to_toml())
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(args)?;
    let scenarios = build_suite(&cfg.suite, &cfg)?;
    let model = obtain_model(&cfg)?;
    let generator = cfg.generator.build();
    let planner = Planner::new(&model, generator.as_ref(), cfg.arbitration, cfg.ablation);
    let eval = evaluate(&scenarios, &planner).map_err(runtime_err)?;
    eval.write(&cfg.out).map_err(|e| runtime_err(format!("cannot write {}: {e}", cfg.out.display())))?;
    echo_config(&cfg)?;
    let a = &eval.aggregate;
    println!(
        "{} scenarios, {} frames: l2_avg {:.3} m, col_rate {:.4}, tpc_avg {:.3} m -> {}",
        eval.scenarios.len(),
        a.frames,
        a.l2.avg,
        a.collision_rate,
        a.tpc.avg,
        cfg.out.display()
    );
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(args)?;
    let (model, log) = train_model(&cfg)?;
    let fp = save_training(&cfg, &model, &log)?;
    echo_config(&cfg)?;
    if let Some(last) = log.steps.last() {
        println!("{} steps, final total loss {:.6}", log.steps.len(), last.loss.total);
    }
    println!("weights {} sha256 {fp}", cfg.out.join("weights.json").display());
    Ok(())
}

fn cmd_check(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(args)?;
    let model = obtain_model(&cfg)?;
    let generator = cfg.generator.build();
    let g = generator.as_ref();
    let suite = |name: &str| Suite::builtin(name).map_err(config_err);
    let results: Vec<CheckResult> = vec![
        checks::case_study(&model, g, cfg.arbitration).map_err(runtime_err)?,
        checks::causality(&model, g, cfg.arbitration, &suite("causality")?).map_err(runtime_err)?,
        checks::determinism(&model, g, cfg.arbitration, &suite("case_study")?).map_err(runtime_err)?,
    ];
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn cmd_trace(args: &TraceArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", args.path.display())))?;
    let traces = read_traces(&text).map_err(runtime_err)?;
    if !args.replay {
        let frame = find_frame(&traces, args.frame).map_err(runtime_err)?;
        print!("{}", render_frame(frame));
        return Ok(());
    }
    let weights = match &args.weights {
        Some(w) => w.clone(),
        None => args
            .path
            .parent()
            .and_then(Path::parent)
            .map(|d| d.join("weights.json"))
            .ok_or_else(|| config_err("cannot locate weights.json; pass --weights"))?,
    };
    let model = Model::load_checkpoint(&weights)
        .map_err(|e| config_err(format!("checkpoint {}: {e}", weights.display())))?;
    let diffs = replay_traces(&text, &model).map_err(runtime_err)?;
    for d in &diffs {
        println!("{d}");
    }
    if diffs.is_empty() {
        println!("replayed {} frames: identical", traces.len());
        Ok(())
    } else {
        Err(Failure::Check(format!("replay differs in {} fields", diffs.len())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Train(a) => cmd_train(a),
        Command::Check(a) => cmd_check(a),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
