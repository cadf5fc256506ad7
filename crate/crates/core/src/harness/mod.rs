//! Experiment orchestration: runs a learner against a loss process, records
//! exact expected per-episode losses and comparator losses, and writes CSV and
//! JSON outputs.

mod config;
mod output;
mod sweep;

use std::path::Path as FsPath;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ExperimentConfig, LearnerSpec, LossSpec, MdpSource};
pub use output::{
    config_hash, read_records, write_manifest, write_records, Manifest, ManifestRun, CSV_HEADER,
};
pub use sweep::{run_configs, sweep, thread_count, SweepOutcome};

use crate::complexity::{MeasureAccumulator, MeasureReport};
use crate::env::{corruption_increment, LossProcess};
use crate::error::{Error, Result};
use crate::learner::{InvariantMonitor, Learner};
use crate::mdp::{
    best_deterministic_policy, occupancy, sample_trajectory, LayeredMdp, LossTable, Trajectory,
};

/// Child seed for one purpose, derived from the run's master seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// One CSV row. Virtual rows carry no environment loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub t: usize,
    pub real: bool,
    pub expected_loss: f64,
    pub comp_hindsight: f64,
    pub comp_mustar: Option<f64>,
    pub corruption_inc: f64,
    pub virtual_count: usize,
    pub max_eta: f64,
    pub solver_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub learner: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Cumulative regret against the best fixed policy for the realized losses.
    pub regret_hindsight: Vec<f64>,
    /// Cumulative regret against the mean-optimal policy, stochastic processes only.
    pub regret_mustar: Option<Vec<f64>>,
    /// `sum_t <q_t - q*, mu>`, stochastic processes only.
    pub pseudo_regret: Option<Vec<f64>>,
    pub virtual_count: usize,
    pub hindsight_policy: Vec<usize>,
    pub report: Option<MeasureReport>,
    pub monitor: InvariantMonitor,
    pub wall_clock_secs: f64,
}

impl RunSummary {
    pub fn final_regret_hindsight(&self) -> f64 {
        self.regret_hindsight.last().copied().unwrap_or(0.0)
    }

    pub fn final_regret_mustar(&self) -> Option<f64> {
        self.regret_mustar.as_ref().and_then(|r| r.last().copied())
    }

    pub fn final_pseudo_regret(&self) -> Option<f64> {
        self.pseudo_regret.as_ref().and_then(|r| r.last().copied())
    }
}

/// Everything produced by one seed.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<EpisodeRecord>,
}

/// Runs one seed of `config` in memory.
pub fn run_seed(config: &ExperimentConfig, mdp: &LayeredMdp, seed: u64) -> Result<RunOutput> {
    let env = config.build_losses(mdp, derive_seed(seed, "env"))?;
    let learner = config.build_learner(mdp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "learner"));
    let mut partial = Vec::new();
    let result = drive(config, mdp, env, learner, &mut rng, seed, &mut partial);
    result.map_err(|e| {
        if let Some(dir) = &config.out_dir {
            let _ = flush_partial(dir, config, seed, &partial, &e);
        }
        e
    })
}

fn flush_partial(
    dir: &FsPath,
    config: &ExperimentConfig,
    seed: u64,
    records: &[EpisodeRecord],
    err: &Error,
) -> Result<()> {
    let run_dir = dir.join(config_hash(config));
    std::fs::create_dir_all(&run_dir)?;
    write_records(run_dir.join(format!("seed_{seed}.csv")), records)?;
    std::fs::write(run_dir.join(format!("seed_{seed}.error")), err.to_string())?;
    Ok(())
}

fn drive(
    config: &ExperimentConfig,
    mdp: &LayeredMdp,
    mut env: LossProcess,
    mut learner: Box<dyn Learner + Send>,
    rng: &mut ChaCha8Rng,
    seed: u64,
    records: &mut Vec<EpisodeRecord>,
) -> Result<RunOutput> {
    let started = Instant::now();
    let horizon = config.horizon;
    let moments = env.moments().ok();
    let mustar_occ = moments.as_ref().map(|(mu, _)| {
        let (pi, _) = best_deterministic_policy(mdp, mu);
        occupancy(mdp, &pi)
    });
    let mut losses: Vec<LossTable> = Vec::with_capacity(horizon);
    let mut expected = Vec::with_capacity(horizon);
    let mut pseudo = Vec::with_capacity(if moments.is_some() { horizon } else { 0 });
    let mut real_rows = Vec::with_capacity(horizon);
    let mut accumulator = config.measures.then(|| MeasureAccumulator::new(mdp));

    for t in 1..=horizon {
        let (ell, clean) = env.next_loss(t)?;
        let decision = learner.act()?;
        let diag = learner.diagnostics();
        for k in 0..decision.virtual_episodes {
            records.push(EpisodeRecord {
                t,
                real: false,
                expected_loss: 0.0,
                comp_hindsight: 0.0,
                comp_mustar: moments.as_ref().map(|_| 0.0),
                corruption_inc: 0.0,
                virtual_count: diag.virtual_count - decision.virtual_episodes + k + 1,
                max_eta: diag.max_eta,
                solver_iters: 0,
            });
        }
        let path = sample_trajectory(mdp, &decision.policy, rng);
        let q_pi = occupancy(mdp, &decision.policy);
        let loss_t = q_pi.expected_loss(&ell);
        if let (Some((mu, _)), Some(star)) = (&moments, &mustar_occ) {
            pseudo.push(q_pi.expected_loss(mu) - star.expected_loss(mu));
        }
        learner.update(&Trajectory::observe(&path, &ell))?;
        let diag = learner.diagnostics();
        real_rows.push(records.len());
        records.push(EpisodeRecord {
            t,
            real: true,
            expected_loss: loss_t,
            comp_hindsight: f64::NAN,
            comp_mustar: mustar_occ.as_ref().map(|o| o.expected_loss(&ell)),
            corruption_inc: corruption_increment(mdp, &ell, &clean),
            virtual_count: diag.virtual_count,
            max_eta: diag.max_eta,
            solver_iters: decision.solver_iters,
        });
        expected.push(loss_t);
        if let Some(acc) = accumulator.as_mut() {
            acc.push(&ell, &clean);
        }
        losses.push(ell);
    }

    let mut total = mdp.zeros();
    for l in &losses {
        total.add_assign(l);
    }
    let (hindsight, _) = best_deterministic_policy(mdp, &total);
    let hindsight_occ = occupancy(mdp, &hindsight);
    let mut regret_hindsight = Vec::with_capacity(horizon);
    let mut regret_mustar = moments.as_ref().map(|_| Vec::with_capacity(horizon));
    let (mut acc_h, mut acc_m) = (0.0, 0.0);
    for (i, (l, &row)) in losses.iter().zip(&real_rows).enumerate() {
        let comp = hindsight_occ.expected_loss(l);
        records[row].comp_hindsight = comp;
        acc_h += expected[i] - comp;
        regret_hindsight.push(acc_h);
        if let (Some(curve), Some(c)) = (regret_mustar.as_mut(), records[row].comp_mustar) {
            acc_m += expected[i] - c;
            curve.push(acc_m);
        }
    }
    let pseudo_regret = moments.as_ref().map(|_| {
        pseudo
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    });
    let report = accumulator.map(|acc| acc.report(moments.as_ref().map(|(m, v)| (m, v))));
    let summary = RunSummary {
        config_hash: config_hash(config),
        learner: learner.name().to_string(),
        seed,
        horizon,
        regret_hindsight,
        regret_mustar,
        pseudo_regret,
        virtual_count: learner.diagnostics().virtual_count,
        hindsight_policy: hindsight.as_deterministic().expect("greedy policy"),
        report,
        monitor: learner.monitor().clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        summary,
        records: std::mem::take(records),
    })
}

/// Runs every seed of `config` sequentially, writing outputs when `out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let mdp = config.validate()?;
    let mut out = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = run_seed(config, &mdp, seed)?;
        if let Some(dir) = &config.out_dir {
            output::write_run(dir, config, &run)?;
        }
        out.push(run.summary);
    }
    if let Some(dir) = &config.out_dir {
        write_manifest(dir, &[(config.clone(), out.clone())])?;
    }
    Ok(out)
}

/// Complexity report of the loss process alone, for each seed.
pub fn compute_measures(config: &ExperimentConfig) -> Result<Vec<(u64, MeasureReport)>> {
    let mdp = config.validate()?;
    config
        .seeds
        .iter()
        .map(|&seed| {
            let mut env = config.build_losses(&mdp, derive_seed(seed, "env"))?;
            let mut acc = MeasureAccumulator::new(&mdp);
            for t in 1..=config.horizon {
                let (ell, clean) = env.next_loss(t)?;
                acc.push(&ell, &clean);
            }
            let moments = env.moments().ok();
            Ok((seed, acc.report(moments.as_ref().map(|(m, v)| (m, v)))))
        })
        .collect()
}
