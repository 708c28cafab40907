use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sketch_lstd::harness::Criterion;
use sketch_lstd_cli::checks::Fault;
use sketch_lstd_cli::commands::{self, Options};
use sketch_lstd_cli::CliError;

#[derive(Parser)]
#[command(
    name = "sketch-lstd",
    version,
    about = "Sketched policy-evaluation experiments"
)]
struct Cli {
    /// Output directory for caches and result CSVs.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `base_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Print the planned run matrix and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
    /// Keep only the first N parameter assignments.
    #[arg(long)]
    max_assignments: Option<usize>,
    /// Estimate the ground truth if the cache is missing.
    #[arg(long)]
    compute_truth: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selection {
    Full,
    SecondHalf,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate Monte Carlo values of on-policy test states.
    GroundTruth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dry_run: bool,
    },
    /// Run every configured parameter combination.
    Run(ExperimentArgs),
    /// Sweep the standard step-size/ridge × λ grid and select parameters.
    Sweep(ExperimentArgs),
    /// Run the invariant battery.
    Verify {
        /// Run a single check.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Aggregate results CSVs into learning curves, best parameters and
    /// sensitivity tables.
    Report {
        /// Results CSVs (default: <out>/results.csv).
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "full")]
        selection: Selection,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut opts = Options {
        out: cli.out.clone(),
        jobs: cli.jobs,
        ..Options::default()
    };
    match cli.command {
        Command::GroundTruth { config, dry_run } => {
            let cfg = commands::load_config(&config, cli.seed)?;
            opts.dry_run = dry_run;
            commands::cmd_ground_truth(&cfg, &opts)?;
        }
        Command::Run(args) => {
            let cfg = experiment_opts(&args, cli.seed, &mut opts)?;
            commands::cmd_run(&cfg, &opts)?;
        }
        Command::Sweep(args) => {
            let cfg = experiment_opts(&args, cli.seed, &mut opts)?;
            commands::cmd_sweep(&cfg, &opts)?;
        }
        Command::Verify { only, inject_fault } => {
            commands::cmd_verify(only.as_deref(), inject_fault)?;
        }
        Command::Report { inputs, selection } => {
            let inputs = if inputs.is_empty() {
                vec![cli.out.join("results.csv")]
            } else {
                inputs
            };
            let selection = match selection {
                Selection::Full => Criterion::Full,
                Selection::SecondHalf => Criterion::SecondHalf,
            };
            commands::cmd_report(&inputs, &cli.out, selection)?;
        }
    }
    Ok(())
}

fn experiment_opts(
    args: &ExperimentArgs,
    seed: Option<u64>,
    opts: &mut Options,
) -> Result<sketch_lstd_cli::ExperimentConfig, CliError> {
    opts.dry_run = args.dry_run;
    opts.max_assignments = args.max_assignments;
    opts.compute_truth = args.compute_truth;
    commands::load_config(&args.config, seed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
