//! Benchmark runner for robust topology optimization under random loads.
//!
//! Exit codes: 0 success, 2 invalid arguments/configuration, 3 solver or
//! numerical failure, 4 I/O failure.

use clap::{Args, Parser, Subcommand};
use rto_core::artifacts::{emit_run_artifacts, evaluate_density_file, run_trials};
use rto_core::config::Hyperparams;
use rto_core::error::Error as CoreError;
use rto_core::fem::SolverKind;
use rto_core::optimizer::{run, Mode};
use rto_core::problems::{problem, BuiltProblem, Preset, ProblemSpec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rto", version, about = "Robust topology optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single optimization and emit its artifacts.
    Run(RunArgs),
    /// Run independent trials with consecutive seeds and aggregate them.
    Trials(TrialsArgs),
    /// Re-evaluate a stored density field under a problem's load model.
    Eval(EvalArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Problem name: simple-column or double-hook.
    #[arg(long)]
    problem: String,

    /// Mesh resolution preset for problems that offer several.
    #[arg(long, default_value = "small")]
    preset: String,

    /// Mean/variance weight in [0, 1].
    #[arg(long)]
    kappa: f64,

    /// Step-size scaling factor; defaults to the problem's per-kappa value.
    #[arg(long)]
    theta: Option<f64>,

    /// Volume fraction override.
    #[arg(long)]
    vf: Option<f64>,

    /// Update rule: acmdsa, mdsa, or mc.
    #[arg(long, default_value = "acmdsa")]
    mode: String,

    /// Gradient samples per step (default 2; 1000 in mc mode).
    #[arg(long)]
    samples: Option<usize>,

    /// Final-evaluation sample count.
    #[arg(long)]
    eval_samples: Option<usize>,

    /// Linear solver: direct or cg (default picked by problem size).
    #[arg(long)]
    solver: Option<String>,

    /// Relative residual tolerance of CG solves.
    #[arg(long)]
    cg_tol: Option<f64>,

    /// Flat key=value file overriding algorithm parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Artifact output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TrialsArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Base seed; trials use base..base+n-1.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Number of independent trials.
    #[arg(long, default_value_t = 5)]
    trials: u64,

    /// Artifact output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Path to a density.csv produced by `run`.
    #[arg(long)]
    density: PathBuf,

    /// Evaluation seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

struct Prepared {
    built: BuiltProblem,
    hyper: Hyperparams,
    kappa: f64,
    mode: Mode,
}

fn prepare(common: &CommonArgs) -> Result<Prepared, CoreError> {
    let preset = Preset::parse(&common.preset)?;
    let mode = Mode::parse(&common.mode)?;
    if !(0.0..=1.0).contains(&common.kappa) {
        return Err(CoreError::Parameter(format!(
            "kappa must lie in [0, 1], got {}",
            common.kappa
        )));
    }
    let mut spec: ProblemSpec = problem(&common.problem, preset)?;
    if let Some(vf) = common.vf {
        if !(vf > 0.0 && vf < 1.0) {
            return Err(CoreError::Parameter(format!(
                "volume fraction must lie in (0, 1), got {vf}"
            )));
        }
        spec.vf = vf;
    }

    // Defaults: problem values, then mode adjustments, then config file,
    // then explicit flags.
    let mut hyper = spec.hyper.clone();
    hyper.theta = spec.default_theta(common.kappa);
    if mode == Mode::McReference {
        hyper.samples = 1000;
        hyper.n_max = 100;
        hyper.n_min = 100;
    }
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)?;
        hyper.apply_config_text(&text)?;
    }
    if let Some(theta) = common.theta {
        hyper.theta = theta;
    }
    if let Some(samples) = common.samples {
        hyper.samples = samples;
    }
    if let Some(es) = common.eval_samples {
        hyper.eval_samples = es;
    }
    hyper.validate()?;

    let mut solver = spec.default_solver();
    if let Some(kind) = &common.solver {
        solver.kind = match kind.as_str() {
            "direct" => SolverKind::Direct,
            "cg" => SolverKind::Cg,
            other => {
                return Err(CoreError::Config(format!(
                    "unknown solver {other:?} (expected direct or cg)"
                )))
            }
        };
    }
    if let Some(tol) = common.cg_tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CoreError::Parameter(format!(
                "solver tolerance must lie in (0, 1), got {tol}"
            )));
        }
        solver.tol = tol;
    }

    let built = spec.build(solver, &hyper, mode)?;
    Ok(Prepared {
        built,
        hyper,
        kappa: common.kappa,
        mode,
    })
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Parameter(_) | CoreError::Config(_) | CoreError::Shape(_) => 2,
        CoreError::Io(_) => 4,
        CoreError::AtStep { source, .. } => exit_code_for(source),
        _ => 3,
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CoreError> {
    let p = prepare(&args.common)?;
    log::info!(
        "running {} ({} elements), kappa = {}, mode = {}, seed = {}",
        p.built.spec.name,
        p.built.fem.mesh.n_elements(),
        p.kappa,
        p.mode.name(),
        args.seed
    );
    let record = run(&p.built, &p.hyper, p.kappa, p.mode, args.seed)?;
    emit_run_artifacts(
        &args.out, &record, &p.built, &p.hyper, p.kappa, p.mode, args.seed,
    )?;
    println!(
        "J_hat={} mu_hat={} sigma_hat={} N_step={} N_solve={} wall_s={:.1}",
        record.eval.objective,
        record.eval.mean,
        record.eval.sigma,
        record.n_step,
        record.n_solve,
        record.wall_seconds
    );
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn cmd_trials(args: &TrialsArgs) -> Result<(), CoreError> {
    let p = prepare(&args.common)?;
    let stats = run_trials(
        &p.built,
        &p.hyper,
        p.kappa,
        p.mode,
        args.seed,
        args.trials,
        Some(&args.out),
    )?;
    print!("{}", stats.summary());
    println!("artifacts written to {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CoreError> {
    let p = prepare(&args.common)?;
    let text = std::fs::read_to_string(&args.density)?;
    let summary = evaluate_density_file(
        &p.built,
        p.kappa,
        &text,
        p.hyper.eval_samples,
        args.seed,
    )?;
    println!(
        "J_hat={} mu_hat={} sigma_hat={} samples={}",
        summary.objective, summary.mean, summary.sigma, summary.samples
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Trials(args) => cmd_trials(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
