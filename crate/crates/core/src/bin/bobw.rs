use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bobw::harness::{compute_measures, run_experiment, sweep, ExperimentConfig};
use bobw::mdp::{validate_mdp, MdpDocument};
use bobw::{Error, Result};

#[derive(Parser)]
#[command(name = "bobw", version, about = "Best-of-both-worlds learners for layered MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Overrides {
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of episodes.
    #[arg(long = "T")]
    horizon: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            config.out_dir = Some(out.clone());
        }
        if let Some(t) = self.horizon {
            config.horizon = t;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run every `*.json` config in a directory in parallel.
    Sweep {
        dir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the complexity report of a config's loss process.
    Measures {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check an MDP file and list every violation.
    Validate { mdp: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, overrides } => {
            let mut config = ExperimentConfig::load(config)?;
            overrides.apply(&mut config);
            for s in run_experiment(&config)? {
                let mustar = s
                    .final_regret_mustar()
                    .map(|r| format!(" regret_mustar={r:.6}"))
                    .unwrap_or_default();
                println!(
                    "{} seed={} T={} regret_hindsight={:.6}{mustar} virtual={} checks_ok={}",
                    s.learner,
                    s.seed,
                    s.horizon,
                    s.final_regret_hindsight(),
                    s.virtual_count,
                    s.monitor.all_hold()
                );
            }
            Ok(())
        }
        Command::Sweep { dir, overrides } => {
            let out = overrides
                .out
                .clone()
                .ok_or_else(|| Error::Config("sweep needs --out".into()))?;
            let outcome = if overrides.seed.is_some() || overrides.horizon.is_some() {
                let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                paths.sort();
                let configs = paths
                    .iter()
                    .map(|p| {
                        let mut c = ExperimentConfig::load(p)?;
                        overrides.apply(&mut c);
                        Ok(c)
                    })
                    .collect::<Result<Vec<_>>>()?;
                bobw::harness::run_configs(&configs, Some(&out))?
            } else {
                sweep(&dir, &out)?
            };
            let runs: usize = outcome.groups.iter().map(|(_, s)| s.len()).sum();
            println!(
                "{runs} runs, {} failures, {} aggregate rows, manifest at {}",
                outcome.failures.len(),
                outcome.aggregate_rows,
                out.join("manifest.json").display()
            );
            for (hash, seed, msg) in &outcome.failures {
                eprintln!("failed: {hash} seed {seed}: {msg}");
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(Error::Invariant(format!("{} runs failed", outcome.failures.len())))
            }
        }
        Command::Measures { config, overrides } => {
            let mut config = ExperimentConfig::load(config)?;
            overrides.apply(&mut config);
            let reports: Vec<_> = compute_measures(&config)?
                .into_iter()
                .map(|(seed, report)| serde_json::json!({ "seed": seed, "report": report }))
                .collect();
            let text = serde_json::to_string_pretty(&reports)?;
            match &config.out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    std::fs::write(dir.join("measures.json"), &text)?;
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Validate { mdp } => {
            let text = std::fs::read_to_string(&mdp)?;
            let doc: MdpDocument = serde_json::from_str(&text)?;
            match validate_mdp(&doc) {
                Ok(()) => {
                    println!("{}: valid", mdp.display());
                    Ok(())
                }
                Err(violations) => Err(Error::InvalidMdp(
                    violations.iter().map(ToString::to_string).collect(),
                )),
            }
        }
    }
}
