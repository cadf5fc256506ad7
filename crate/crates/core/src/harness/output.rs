//! CSV records, per-run JSON files, config hashing and the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EpisodeRecord, ExperimentConfig, RunOutput, RunSummary};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "t",
    "real",
    "expected_loss",
    "comp_hindsight",
    "comp_mustar",
    "corruption_inc",
    "virtual_count",
    "max_eta",
    "solver_iters",
];

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// First 16 hex digits of the SHA-256 of the config with seeds and output
/// directory cleared.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canonical = config.clone();
    canonical.seeds.clear();
    canonical.out_dir = None;
    let json = serde_json::to_vec(&canonical).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

pub fn write_records(path: impl AsRef<Path>, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn record_fields(r: &EpisodeRecord) -> [String; 9] {
    [
        r.t.to_string(),
        u8::from(r.real).to_string(),
        fmt_float(r.expected_loss),
        fmt_float(r.comp_hindsight),
        r.comp_mustar.map(fmt_float).unwrap_or_default(),
        fmt_float(r.corruption_inc),
        r.virtual_count.to_string(),
        fmt_float(r.max_eta),
        r.solver_iters.to_string(),
    ]
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let bad = |field: &str| Error::Config(format!("unparsable CSV field {field:?}"));
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let float = |i: usize| f(i).parse::<f64>().map_err(|_| bad(f(i)));
        let int = |i: usize| f(i).parse::<usize>().map_err(|_| bad(f(i)));
        out.push(EpisodeRecord {
            t: int(0)?,
            real: f(1) == "1",
            expected_loss: float(2)?,
            comp_hindsight: float(3)?,
            comp_mustar: if f(4).is_empty() { None } else { Some(float(4)?) },
            corruption_inc: float(5)?,
            virtual_count: int(6)?,
            max_eta: float(7)?,
            solver_iters: int(8)?,
        });
    }
    Ok(out)
}

fn run_paths(dir: &Path, hash: &str, seed: u64) -> (PathBuf, PathBuf, PathBuf) {
    let base = dir.join(hash);
    (
        base.join(format!("seed_{seed}.csv")),
        base.join(format!("seed_{seed}.summary.json")),
        base.join(format!("seed_{seed}.measures.json")),
    )
}

/// Writes the CSV, summary JSON and (when present) measure report of one run.
pub(crate) fn write_run(dir: &Path, config: &ExperimentConfig, run: &RunOutput) -> Result<()> {
    let hash = config_hash(config);
    std::fs::create_dir_all(dir.join(&hash))?;
    let (csv_path, summary_path, measures_path) = run_paths(dir, &hash, run.summary.seed);
    write_records(&csv_path, &run.records)?;
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&run.summary)?)?;
    if let Some(report) = &run.summary.report {
        std::fs::write(&measures_path, serde_json::to_vec_pretty(report)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub config_hash: String,
    pub name: Option<String>,
    pub learner: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub measures: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub csv_header: Vec<String>,
    pub configs: Vec<ManifestConfig>,
    pub runs: Vec<ManifestRun>,
    #[serde(default)]
    pub failures: Vec<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub(crate) fn build_manifest(
    groups: &[(ExperimentConfig, Vec<RunSummary>)],
    failures: Vec<String>,
) -> Manifest {
    let mut configs = Vec::new();
    let mut runs = Vec::new();
    for (config, summaries) in groups {
        let hash = config_hash(config);
        configs.push(ManifestConfig {
            config_hash: hash.clone(),
            seeds: config.seeds.clone(),
            config: config.clone(),
        });
        for s in summaries {
            let (csv, summary, measures) = run_paths(Path::new(""), &hash, s.seed);
            runs.push(ManifestRun {
                config_hash: hash.clone(),
                name: config.name.clone(),
                learner: s.learner.clone(),
                horizon: s.horizon,
                seed: s.seed,
                csv,
                summary,
                measures: s.report.as_ref().map(|_| measures),
            });
        }
    }
    Manifest {
        csv_header: CSV_HEADER.iter().map(|s| s.to_string()).collect(),
        configs,
        runs,
        failures,
    }
}

/// Writes `manifest.json` with paths relative to `dir`.
pub fn write_manifest(dir: &Path, groups: &[(ExperimentConfig, Vec<RunSummary>)]) -> Result<()> {
    write_manifest_with_failures(dir, groups, Vec::new())
}

pub(crate) fn write_manifest_with_failures(
    dir: &Path,
    groups: &[(ExperimentConfig, Vec<RunSummary>)],
    failures: Vec<String>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = build_manifest(groups, failures);
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
