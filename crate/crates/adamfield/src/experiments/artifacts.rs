//! Artifact files: CSV tables with replay-stable formatting and the JSON run
//! manifest.
//!
//! Numeric CSV fields are printed with 17 significant digits so that a
//! re-run from the same manifest reproduces files byte for byte.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

/// 17 significant digits, locale-free; round-trips f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// A run manifest: everything needed to reproduce the artifacts bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// CLI subcommand that produced the run.
    pub command: String,
    /// Full resolved configuration (TOML text).
    pub config_toml: String,
    /// SHA-256 of `config_toml`.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// Artifact files, relative to the manifest directory.
    pub outputs: Vec<String>,
    /// Free-form run facts (resolved batch sizes, flags, ...).
    #[serde(default)]
    pub notes: std::collections::BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config_toml: String, seed: u64) -> Self {
        let config_hash = hex_digest(config_toml.as_bytes());
        Self {
            command: command.to_string(),
            config_toml,
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            notes: Default::default(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::AdamFieldError::Config(e.to_string()))?;
        std::fs::write(&path, json)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| crate::error::AdamFieldError::Config(e.to_string()))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Trajectory export: columns `n, t_n, theta[..], m[..], v[..], sigma[..]`.
pub fn write_trajectory_csv(path: &Path, traj: &crate::adam::Trajectory, dim: usize) -> Result<()> {
    let mut header: Vec<String> = vec!["n".into(), "t_n".into()];
    for name in ["theta", "m", "v", "sigma"] {
        for i in 0..dim {
            header.push(format!("{name}{i}"));
        }
    }
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = traj
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.n.to_string(), fmt_f64(r.t)];
            for field in [&r.theta, &r.m, &r.v, &r.sigma] {
                row.extend(field.iter().map(|&x| fmt_f64(x)));
            }
            row
        })
        .collect();
    write_csv(path, &header_refs, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-17, -4.2e300] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
    }

    #[test]
    fn manifest_round_trips() {
        let dir = std::env::temp_dir().join(format!("adamfield-test-{}", std::process::id()));
        let mut m = Manifest::new("simulate", "a = 1\n".into(), 7);
        m.outputs.push("trajectory.csv".into());
        let path = m.write(&dir).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back.config_hash, m.config_hash);
        assert_eq!(back.outputs, m.outputs);
        std::fs::remove_dir_all(&dir).ok();
    }
}
