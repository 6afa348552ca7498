//! `shapebridge`: phantom generation, training, sampling and evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Bad invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "shapebridge",
    version,
    about = "Shape-conditioned volume synthesis on voxel grids"
)]
struct Cli {
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long, global = true, env = "SHAPEBRIDGE_THREADS")]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom dataset with its manifest.
    Phantom(commands::PhantomArgs),
    /// Build the cortex SDF and condition grids for a surface pair.
    Sdf(commands::SdfArgs),
    /// Train a denoiser on a phantom dataset.
    Train(commands::TrainArgs),
    /// Sample volumes from a checkpoint.
    Sample(commands::SampleArgs),
    /// Reconstruct surfaces and compute metrics against ground truth.
    Eval(commands::EvalArgs),
    /// Thinning-recovery experiment on one phantom.
    Atrophy(commands::AtrophyArgs),
    /// Print the bridge coefficient table.
    ScheduleDump(commands::ScheduleArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<config::OutputExists>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<shapebridge::Error>() {
            return match e {
                shapebridge::Error::InvalidArgument(_) => 1,
                shapebridge::Error::NonFinite(_) => 3,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Sdf(a) => commands::sdf(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Eval(a) => commands::eval(a),
        Command::Atrophy(a) => commands::atrophy(a),
        Command::ScheduleDump(a) => commands::schedule_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
