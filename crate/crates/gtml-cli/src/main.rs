use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gtml::config::Config;
use gtml::Error;
use gtml_cli::experiments;

/// Game-theoretic machine learning experiments: simulate agent behavior,
/// learn behavior models and mechanisms, and confront the error-bound
/// formulas with Monte-Carlo estimates.
#[derive(Parser)]
#[command(name = "gtml", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications (default: all cores). Results do
    /// not depend on this.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one trajectory under the training mechanism.
    Simulate(RunArgs),
    /// Fit the configured behavior learner on a stored trajectory.
    FitBehavior(RunArgs),
    /// Behavior-learning error sweep over T1.
    BehaviorConvergence(RunArgs),
    /// Sup-deviation sweep of empirical risks over T2.
    MechanismConvergence(RunArgs),
    /// Sample-sharing ablation over growing mechanism grids.
    SharingAblation(RunArgs),
    /// Full pipeline: learn the model, learn the mechanism, report gaps.
    EndToEnd(RunArgs),
    /// Evaluate the bound formulas over the configured sweeps.
    Bounds(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::FitBehavior(a)
            | Command::BehaviorConvergence(a)
            | Command::MechanismConvergence(a)
            | Command::SharingAblation(a)
            | Command::EndToEnd(a)
            | Command::Bounds(a) => a,
        }
    }
}

fn run(cli: &Cli) -> gtml::Result<()> {
    let args = cli.command.args();
    let mut cfg = Config::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&args.out)?;
    let dispatch = || match &cli.command {
        Command::Simulate(a) => experiments::cmd_simulate(&cfg, &a.out),
        Command::FitBehavior(a) => experiments::cmd_fit_behavior(&cfg, &a.out),
        Command::BehaviorConvergence(a) => {
            experiments::cmd_behavior_convergence(&cfg, &a.out)
        }
        Command::MechanismConvergence(a) => {
            experiments::cmd_mechanism_convergence(&cfg, &a.out)
        }
        Command::SharingAblation(a) => experiments::cmd_sharing_ablation(&cfg, &a.out),
        Command::EndToEnd(a) => experiments::cmd_end_to_end(&cfg, &a.out),
        Command::Bounds(a) => experiments::cmd_bounds(&cfg, &a.out),
    };
    match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(dispatch)
        }
        None => dispatch(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match &e {
                Error::Config(_) => 2,
                Error::Parse { .. } => 2,
                _ => 3,
            };
            eprintln!("gtml: error: {e}");
            ExitCode::from(code)
        }
    }
}
