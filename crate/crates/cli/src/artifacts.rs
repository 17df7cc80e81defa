use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};

/// Output files held in memory until the run has succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Header row, then one record per row; floats use the shortest
    /// round-trip representation.
    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = R>) -> anyhow::Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.push(name, bytes);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.push(name, bytes);
        Ok(())
    }

    pub fn text(&mut self, name: &str, body: String) {
        self.push(name, body.into_bytes());
    }

    fn push(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.retain(|(n, _)| n != name);
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file; on failure removes the ones already written.
    pub fn write_all(&self, dir: &Path) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(anyhow::Error::new(e).context(format!("writing {}", path.display())));
            }
            written.push(path);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// `|value − target| ≤ tolerance`.
    pub fn abs(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::with(name, value, target, tolerance, (value - target).abs() <= tolerance)
    }

    /// `|value − target| ≤ tolerance·|target|`.
    pub fn rel(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::with(name, value, target, tolerance, (value - target).abs() <= tolerance * target.abs())
    }

    /// `value ≤ target + tolerance`.
    pub fn at_most(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::with(name, value, target, tolerance, value <= target + tolerance)
    }

    /// `value ≥ target`.
    pub fn at_least(name: &str, value: f64, target: f64) -> Self {
        Self::with(name, value, target, 0.0, value >= target)
    }

    pub fn failed(name: &str, note: String) -> Self {
        Self { note: Some(note), ..Self::with(name, f64::NAN, f64::NAN, f64::NAN, false) }
    }

    fn with(name: &str, value: f64, target: f64, tolerance: f64, pass: bool) -> Self {
        Self { name: name.to_string(), value, target, tolerance, pass: pass && value.is_finite(), note: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
    pub all_checks_pass: bool,
}

impl RunManifest {
    pub fn new(cfg: &ExperimentConfig, files: &Artifacts, checks: Vec<Check>, wall_time_s: f64) -> anyhow::Result<Self> {
        let files = files
            .files
            .iter()
            .map(|(name, bytes)| FileEntry { name: name.clone(), bytes: bytes.len(), sha256: hex(&Sha256::digest(bytes)) })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: cfg.command.name().to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            wall_time_s,
            files,
            all_checks_pass: checks.iter().all(|c| c.pass),
            checks,
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut a = Artifacts::new();
        a.csv("t.csv", &["x", "y"], [(0.5, 1.0), (1e-7, -2.25)]).unwrap();
        assert_eq!(std::str::from_utf8(a.get("t.csv").unwrap()).unwrap(), "x,y\n0.5,1.0\n1e-7,-2.25\n");
    }

    #[test]
    fn checks() {
        assert!(Check::rel("a", 0.52, 0.5, 0.1).pass);
        assert!(!Check::rel("a", 0.6, 0.5, 0.1).pass);
        assert!(!Check::abs("a", f64::NAN, 0.0, 1.0).pass);
        assert!(Check::at_most("a", 1.01, 1.0, 0.02).pass);
    }
}
