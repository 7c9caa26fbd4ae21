//! `mlr-em`: dataset generation, single fits, sweeps and population checks.
//!
//! Exit status is 0 on success, 1 for usage and input errors and 2 when a
//! numerical routine fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use mlr_em::em::EmVariant;
use mlr_em::harness::NGrid;
use mlr_em::init::InitScheme;

#[derive(Debug, Parser)]
#[command(
    name = "mlr-em",
    version,
    about = "EM for symmetric two-component mixed linear regression"
)]
struct Cli {
    /// Worker threads for sweeps and grid checks (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a dataset with θ* = snr·σ*·e₁.
    Generate(GenerateArgs),
    /// Run EM on a dataset file.
    Fit(FitArgs),
    /// Final error statistics over an (snr, n) grid.
    RateSweep(SweepArgs),
    /// Per-iteration error profile at a single (snr, n).
    Trajectory(SweepArgs),
    /// Mean stopping iteration over an (snr, n) grid.
    IterScaling(SweepArgs),
    /// Population-operator diagnostics on a grid of (‖θ‖, ‖θ*‖, cos α).
    PopCheck(PopCheckArgs),
    /// Spectral initialization calibration over repeated datasets.
    InitCheck(InitCheckArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    snr: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_star: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// standard, easy or unknown-var
    #[arg(long, default_value = "standard")]
    variant: EmVariant,
    /// spectral, sphere[:NORM] or perturb[:REL]
    #[arg(long, default_value = "spectral")]
    init: InitScheme,
    /// Easy-EM warm-up steps before the main variant.
    #[arg(long, default_value_t = 0)]
    phase1_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// True SNR with θ* on the first axis; enables the error columns.
    #[arg(long)]
    snr_truth: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    /// JSON file with SweepSpec fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    snr_list: Option<Vec<f64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    variant: Option<EmVariant>,
    #[arg(long)]
    init: Option<InitScheme>,
    #[arg(long)]
    seed: Option<u64>,
    /// Regenerate n_list as a pow2 or sqrt2 ladder between its first and last entries.
    #[arg(long)]
    grid: Option<NGrid>,
    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PopCheckArgs {
    /// `default` or a CSV with columns norm_theta,norm_theta_star,cos_alpha.
    #[arg(long, default_value = "default")]
    grid: String,
    #[arg(long, default_value_t = 64)]
    quad_order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct InitCheckArgs {
    #[arg(long, default_value_t = 5)]
    d: usize,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// Number of datasets.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Base seed; dataset `i` derives its seeds from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if e.kind() == clap::error::ErrorKind::UnknownArgument {
                print_valid_flags();
            }
            return ExitCode::from(1);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let name = command_name(&cli.command);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_numerical() => {
            eprintln!("error: numerical failure in `{name}`: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Help of the subcommand named on the command line, or of the top level.
fn print_valid_flags() {
    let mut cmd = Cli::command();
    let named = std::env::args()
        .skip(1)
        .find(|a| cmd.find_subcommand(a).is_some());
    let help = match named {
        Some(name) => cmd
            .find_subcommand_mut(&name)
            .expect("found above")
            .render_help(),
        None => cmd.render_help(),
    };
    eprintln!("\n{help}");
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Fit(_) => "fit",
        Command::RateSweep(_) => "rate-sweep",
        Command::Trajectory(_) => "trajectory",
        Command::IterScaling(_) => "iter-scaling",
        Command::PopCheck(_) => "pop-check",
        Command::InitCheck(_) => "init-check",
    }
}
