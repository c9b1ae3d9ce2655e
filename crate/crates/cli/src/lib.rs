//! Configuration-driven pipelines over `unimap-core`, with checksummed run
//! manifests.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::path::{Path, PathBuf};

pub use config::{Command, RunConfig};
pub use error::CliError;
pub use manifest::{verify_manifest, Manifest, MANIFEST_FILE};
pub use pipeline::Artifacts;

pub const DEFAULT_OUT_DIR: &str = "unimap-out";

/// Loads, resolves and runs `cmd`, writing artifacts and the manifest.
/// Returns the output directory.
pub fn run_config_file(cmd: Command, config: &Path, out: Option<&Path>, workers: usize) -> Result<PathBuf, CliError> {
    let raw = RunConfig::load(config)?;
    let dir = out.map(Path::to_path_buf).or_else(|| raw.outputs.clone()).unwrap_or_else(|| DEFAULT_OUT_DIR.into());
    run_resolved(cmd, raw, &dir, workers)?;
    Ok(dir)
}

fn run_resolved(cmd: Command, raw: RunConfig, dir: &Path, workers: usize) -> Result<Manifest, CliError> {
    if workers == 0 {
        return Err(CliError::config("workers", "must be at least 1"));
    }
    let cfg = raw.resolve(cmd)?;
    let artifacts = pipeline::run(cmd, &cfg, workers)?;
    manifest::write_run(dir, cmd, &cfg, &artifacts)
}

/// Reruns the command recorded in `manifest` into `out` and checks that
/// every output reproduces its recorded checksum.
pub fn replay(manifest: &Path, out: &Path, workers: usize) -> Result<(), CliError> {
    let recorded = Manifest::read(manifest)?;
    let fresh = run_resolved(recorded.command()?, recorded.config()?, out, workers)?;
    if fresh.outputs() != recorded.outputs() {
        return Err(CliError::Manifest(format!("replay into {} does not reproduce the recorded outputs", out.display())));
    }
    Ok(())
}
