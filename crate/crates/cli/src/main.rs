use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use unimap::{replay, run_config_file, verify_manifest, CliError, Command};

#[derive(Parser)]
#[command(name = "unimap", version, about = "Unitary emulation of one-dimensional maps")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Truncated, filtered and unitarized matrix dumps
    Build(RunArgs),
    /// Diagnostics and distributions over the horizon
    Evolve(RunArgs),
    /// Echo-time search, one row per kappa
    EchoScan(RunArgs),
    /// Attractor peaks from a flat start
    Attractors(RunArgs),
    /// Block statistics over a list of thresholds
    SparsitySweep(RunArgs),
    /// Linear cascade against the unitarized evolution and the classical density
    CascadeCompare(RunArgs),
    /// The sample-map scenario with every artifact
    ReproducePaper(RunArgs),
    /// Check the checksums in a manifest
    Verify {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Rerun a manifest and compare its outputs
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `outputs` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Threads for the matrix build; outputs do not depend on it
    #[arg(long)]
    workers: Option<usize>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn execute(sub: Sub) -> Result<(), CliError> {
    let (cmd, args) = match sub {
        Sub::Build(a) => (Command::Build, a),
        Sub::Evolve(a) => (Command::Evolve, a),
        Sub::EchoScan(a) => (Command::EchoScan, a),
        Sub::Attractors(a) => (Command::Attractors, a),
        Sub::SparsitySweep(a) => (Command::SparsitySweep, a),
        Sub::CascadeCompare(a) => (Command::CascadeCompare, a),
        Sub::ReproducePaper(a) => (Command::ReproducePaper, a),
        Sub::Verify { manifest } => {
            let problems = verify_manifest(&manifest)?;
            if problems.is_empty() {
                println!("{}: ok", manifest.display());
                return Ok(());
            }
            return Err(CliError::Manifest(problems.join("; ")));
        }
        Sub::Replay { manifest, out, workers } => {
            replay(&manifest, &out, workers.unwrap_or_else(default_workers))?;
            println!("{}: outputs reproduced", out.display());
            return Ok(());
        }
    };
    let dir = run_config_file(cmd, &args.config, args.out.as_deref(), args.workers.unwrap_or_else(default_workers))?;
    println!("{cmd}: wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("unimap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
