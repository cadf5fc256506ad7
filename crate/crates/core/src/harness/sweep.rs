//! Parallel execution of many `(config, seed)` runs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::output::{write_manifest_with_failures, write_run, CSV_HEADER};
use super::{config_hash, run_seed, ExperimentConfig, RunOutput, RunSummary};
use crate::error::{Error, Result};

/// Worker count from `BOBW_THREADS`, defaulting to the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("BOBW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub groups: Vec<(ExperimentConfig, Vec<RunSummary>)>,
    /// `(config hash, seed, message)` for every failed run.
    pub failures: Vec<(String, u64, String)>,
    pub aggregate_rows: usize,
}

/// Runs every seed of every config in parallel. Failures are isolated per run.
pub fn run_configs(configs: &[ExperimentConfig], out_dir: Option<&Path>) -> Result<SweepOutcome> {
    let mdps = configs
        .iter()
        .map(ExperimentConfig::validate)
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(usize, u64, Result<RunOutput>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| {
                let mut config = configs[i].clone();
                if let Some(dir) = out_dir {
                    config.out_dir = Some(dir.to_path_buf());
                }
                let run = run_seed(&config, &mdps[i], seed);
                let run = match (run, out_dir) {
                    (Ok(run), Some(dir)) => write_run(dir, &config, &run).map(|_| run),
                    (other, _) => other,
                };
                (i, seed, run)
            })
            .collect()
    });

    let mut groups: Vec<(ExperimentConfig, Vec<RunSummary>)> =
        configs.iter().map(|c| (c.clone(), Vec::new())).collect();
    let mut failures = Vec::new();
    let mut aggregate: Vec<(String, u64, RunOutput)> = Vec::new();
    for (i, seed, run) in results {
        match run {
            Ok(run) => {
                groups[i].1.push(run.summary.clone());
                aggregate.push((config_hash(&configs[i]), seed, run));
            }
            Err(e) => failures.push((config_hash(&configs[i]), seed, e.to_string())),
        }
    }
    let aggregate_rows = aggregate.iter().map(|(_, _, r)| r.records.len()).sum();
    if let Some(dir) = out_dir {
        write_aggregate(&dir.join("aggregate.csv"), &aggregate)?;
        let notes = failures
            .iter()
            .map(|(h, s, m)| format!("{h} seed {s}: {m}"))
            .collect();
        write_manifest_with_failures(dir, &groups, notes)?;
    }
    Ok(SweepOutcome {
        groups,
        failures,
        aggregate_rows,
    })
}

fn write_aggregate(path: &Path, runs: &[(String, u64, RunOutput)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["config_hash", "seed"];
    header.extend(CSV_HEADER);
    w.write_record(&header)?;
    for (hash, seed, run) in runs {
        for r in &run.records {
            let mut row = vec![hash.clone(), seed.to_string()];
            row.extend(super::output::record_fields(r));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads every `*.json` config in `dir` (sorted by name) and runs them.
pub fn sweep(dir: &Path, out_dir: &Path) -> Result<SweepOutcome> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no *.json configs in {}", dir.display())));
    }
    let configs = paths
        .iter()
        .map(ExperimentConfig::load)
        .collect::<Result<Vec<_>>>()?;
    run_configs(&configs, Some(out_dir))
}
