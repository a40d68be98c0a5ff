//! CSV tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::run::{ScenarioRun, Table};
use crate::error::Result;
use crate::tolerance;

/// Shortest text that parses back to the same f64; always `.` as separator.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

fn write_table(dir: &Path, t: &Table) -> Result<PathBuf> {
    let path = dir.join(format!("{}.csv", t.name));
    let mut out = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(out, "{}", t.columns.join(","))?;
    for row in &t.rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&t.integer)
            .map(|(v, &int)| if int { format!("{}", *v as i64) } else { format_float(*v) })
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub n_traj: Option<usize>,
    pub hbar: f64,
    pub tolerances: serde_json::Value,
    pub files: Vec<String>,
    pub checks: Vec<ManifestCheck>,
    pub passed: bool,
}

fn tolerances() -> serde_json::Value {
    serde_json::json!({
        "structural": tolerance::STRUCTURAL,
        "eigenspace": tolerance::EIGENSPACE,
        "leakage": tolerance::LEAKAGE,
        "trace_drift_per_step": tolerance::TRACE_DRIFT_PER_STEP,
        "extrapolation_rel": tolerance::EXTRAPOLATION_REL,
        "divergence_slope": tolerance::DIVERGENCE_SLOPE,
        "k_max": tolerance::DEFAULT_K_MAX,
    })
}

impl Manifest {
    pub fn new(run: &ScenarioRun, files: Vec<String>) -> Self {
        let json = run.config.to_json();
        let digest = Sha256::digest(json.as_bytes());
        let conditional = run.config.mode.conditional();
        let ens = run.config.ensemble.clone().unwrap_or_default();
        Self {
            scenario: run.config.name.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed: conditional.then_some(ens.seed),
            n_traj: conditional.then_some(ens.n_traj),
            hbar: run.config.hbar,
            tolerances: tolerances(),
            files,
            checks: run
                .checks
                .iter()
                .map(|c| ManifestCheck {
                    name: c.name.clone(),
                    passed: c.passed,
                    value: c.value,
                    threshold: c.threshold,
                    detail: c.detail.clone(),
                })
                .collect(),
            passed: run.passed(),
        }
    }
}

/// Writes config.json, every table and finally manifest.json into `dir`.
pub fn write_outputs(run: &ScenarioRun, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = vec!["config.json".to_string()];
    fs::write(dir.join("config.json"), run.config.to_json())?;
    for t in &run.tables {
        write_table(dir, t)?;
        files.push(format!("{}.csv", t.name));
    }
    let manifest = Manifest::new(run, files);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Io(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 6.02e23, 1.0, 0.0, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(!s.contains(','));
        }
    }
}
