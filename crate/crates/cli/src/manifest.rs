//! Run manifests: sorted `key = value` lines recording the resolved config,
//! code version, seeds, tolerances, results and a SHA-256 per output file.
//!
//! The `config` entry holds the full resolved config as one line of JSON,
//! so a run can be replayed from its manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};
use unimap_core::linear_alt::DIVERGENCE_GAP;
use unimap_core::propagator::{NEAR_IDENTITY_LIMIT, RANK_DEFICIENT_SV, UNITARITY_TOL};

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::pipeline::Artifacts;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Dotted keys for every leaf of a JSON value.
fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

impl Manifest {
    pub fn emit(cmd: Command, cfg: &RunConfig, artifacts: &Artifacts) -> Self {
        let mut e = BTreeMap::new();
        e.insert("code_version".into(), CODE_VERSION.into());
        e.insert("command".into(), cmd.name().into());
        let json = cfg.to_json();
        let value: Value = serde_json::from_str(&json).expect("config JSON");
        flatten("param", &value, &mut e);
        e.insert("config".into(), json);
        e.insert("seed".into(), cfg.measurement.map(|m| m.seed.to_string()).unwrap_or_else(|| "none".into()));
        for (k, v) in [
            ("tolerance.unitarity", UNITARITY_TOL),
            ("tolerance.rank_deficient_sv", RANK_DEFICIENT_SV),
            ("tolerance.near_identity", NEAR_IDENTITY_LIMIT),
            ("tolerance.divergence_gap", DIVERGENCE_GAP),
        ] {
            e.insert(k.into(), format!("{v:e}"));
        }
        for (k, v) in &artifacts.summary {
            e.insert(k.clone(), one_line(v));
        }
        for (name, bytes) in &artifacts.files {
            e.insert(format!("output.{name}.sha256"), sha256_hex(bytes));
            e.insert(format!("output.{name}.bytes"), bytes.len().to_string());
        }
        Self { entries: e }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CliError::Manifest(format!("line {}: expected `key = value`", i + 1)))?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Manifest(format!("duplicate key `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::Manifest(format!("missing `{key}`")))
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.require("command")?.parse()
    }

    pub fn config(&self) -> Result<RunConfig, CliError> {
        RunConfig::from_json(self.require("config")?)
    }

    /// `(file name, sha256)` for every recorded output.
    pub fn outputs(&self) -> Vec<(&str, &str)> {
        self.entries
            .iter()
            .filter_map(|(k, v)| Some((k.strip_prefix("output.")?.strip_suffix(".sha256")?, v.as_str())))
            .collect()
    }
}

/// Writes the artifacts and their manifest into `dir`.
pub fn write_run(dir: &Path, cmd: Command, cfg: &RunConfig, artifacts: &Artifacts) -> Result<Manifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, bytes) in &artifacts.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(path, e))?;
    }
    let manifest = Manifest::emit(cmd, cfg, artifacts);
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.render()).map_err(|e| CliError::io(path, e))?;
    Ok(manifest)
}

/// Recomputes the checksum of every output listed in the manifest at
/// `path`, resolving file names against the manifest's directory.
/// Returns one message per missing or altered file.
pub fn verify_manifest(path: &Path) -> Result<Vec<String>, CliError> {
    let manifest = Manifest::read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    for (name, expected) in manifest.outputs() {
        match fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == expected => {}
            Ok(_) => problems.push(format!("{name}: checksum mismatch")),
            Err(e) => problems.push(format!("{name}: {e}")),
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (RunConfig, Artifacts) {
        let cfg = RunConfig::from_json(r#"{"measurement": {"samples": 10, "seed": 9}}"#)
            .unwrap()
            .resolve(Command::Evolve)
            .unwrap();
        let mut a = Artifacts::default();
        a.files.insert("b.csv".into(), b"x\n1\n".to_vec());
        a.files.insert("a.txt".into(), b"hello".to_vec());
        a.summary.insert("result.t_c".into(), "5".into());
        (cfg, a)
    }

    #[test]
    fn keys_are_sorted_and_cover_inputs() {
        let (cfg, a) = sample();
        let text = Manifest::emit(Command::Evolve, &cfg, &a).render();
        let keys: Vec<&str> = text.lines().map(|l| l.split_once(" = ").unwrap().0).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        for k in ["code_version", "command", "config", "param.epsilon", "param.basis.n", "param.map.family", "seed", "result.t_c"] {
            assert!(keys.contains(&k), "{k}");
        }
        let m = Manifest::parse(&text).unwrap();
        assert_eq!(m.get("seed"), Some("9"));
        assert_eq!(m.get("param.map.family"), Some("sample_quadratic"));
        assert_eq!(m.config().unwrap(), cfg);
        assert_eq!(m.command().unwrap(), Command::Evolve);
    }

    #[test]
    fn checksum_of_known_input() {
        // sha256("hello")
        assert_eq!(sha256_hex(b"hello"), "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
        let (cfg, a) = sample();
        let m = Manifest::emit(Command::Evolve, &cfg, &a);
        assert_eq!(m.outputs(), [("a.txt", "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"), ("b.csv", m.get("output.b.csv.sha256").unwrap())]);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Manifest::parse("a = 1\nnonsense\n").is_err());
        assert!(Manifest::parse("a = 1\na = 2\n").is_err());
    }
}
