use std::path::PathBuf;
use std::process::ExitCode;

use bulksurf::cli::{execute, Command, Invocation};
use bulksurf::error::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bulksurf", version, about = "Bulk-surface reaction-diffusion solver")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving the outputs; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Seed for randomized property checks; solver runs are deterministic and ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Continue from a checkpoint written by an earlier solve or limit run.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Integrate the full or regularized system.
    Solve,
    /// Integrate the fast-reaction limit system.
    Limit,
    /// Sweep the reaction-rate parameter epsilon.
    SweepEps,
    /// Sweep the regularization parameter delta.
    SweepDelta,
    /// Manufactured-solution order study.
    Mms,
    /// Modal Galerkin solve on the interval.
    Galerkin,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Solve => Command::Solve,
            Cmd::Limit => Command::Limit,
            Cmd::SweepEps => Command::SweepEps,
            Cmd::SweepDelta => Command::SweepDelta,
            Cmd::Mms => Command::Mms,
            Cmd::Galerkin => Command::Galerkin,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let Some(config) = args.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("error: cannot configure {} threads: {e}", args.threads);
            return ExitCode::from(2);
        }
    }
    if let Some(seed) = args.seed {
        log::debug!("seed {seed} ignored: solver runs are deterministic");
    }
    let inv = Invocation {
        command: args.command.into(),
        config,
        out_dir: args.out,
        resume: args.resume,
    };
    match execute(&inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.kind());
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
