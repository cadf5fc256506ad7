//! JSON experiment configuration and its translation into runtime objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::Oreps;
use crate::env::{
    make_hard_instance, AdversarialScript, CorruptionStrategy, DistributionSpec, LossProcess,
    PairDistributions, ScriptRule,
};
use crate::error::{Error, Result};
use crate::global_opt::{GlobalOpt, GlobalOptConfig};
use crate::learner::Learner;
use crate::mdp::{LayeredMdp, MdpDocument, SaTable};
use crate::policy_opt::{PolicyOpt, PolicyOptConfig};
use crate::predictor::PredictorMode;
use crate::solver::DEFAULT_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSource {
    /// MDP JSON file, relative paths resolved against the config file.
    File { path: PathBuf },
    /// Uniform transitions, `|S_0| = 1` and `layer_width` states per later layer.
    Hard {
        #[serde(rename = "H")]
        horizon: usize,
        layer_width: usize,
        #[serde(rename = "A")]
        num_actions: usize,
    },
    Uniform {
        layer_sizes: Vec<usize>,
        #[serde(rename = "A")]
        num_actions: usize,
    },
    /// Random kernel drawn from `seed`.
    Random {
        layer_sizes: Vec<usize>,
        #[serde(rename = "A")]
        num_actions: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Pinned action `Ber(alpha)`, other actions `Ber(alpha + epsilon)`. With
    /// `delta` set, every pair instead takes two values `mean +- delta`.
    Pinned {
        alpha: f64,
        epsilon: f64,
        #[serde(default)]
        pin: Option<Vec<usize>>,
        #[serde(default)]
        delta: Option<f64>,
        #[serde(default = "no_corruption")]
        corruption: CorruptionStrategy,
    },
    /// Explicit per-pair laws `dists[s][a]`.
    Table {
        dists: Vec<Vec<DistributionSpec>>,
        #[serde(default = "no_corruption")]
        corruption: CorruptionStrategy,
    },
    /// `t,s,a,loss` CSV.
    Script { path: PathBuf },
    Drift {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        period: f64,
    },
    Switch {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        block: usize,
    },
    /// `base` for the first `floor(rho T)` episodes, zero afterwards.
    Truncated { rho: f64, base: Box<LossSpec> },
}

fn no_corruption() -> CorruptionStrategy {
    CorruptionStrategy::None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    GlobalOpt {
        #[serde(default)]
        predictor: PredictorMode,
    },
    PolicyOpt {
        #[serde(default)]
        predictor: PredictorMode,
    },
    Oreps {
        #[serde(default)]
        eta: Option<f64>,
    },
}

impl LearnerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            LearnerSpec::GlobalOpt { .. } => "global_opt",
            LearnerSpec::PolicyOpt { .. } => "policy_opt",
            LearnerSpec::Oreps { .. } => "oreps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub mdp: MdpSource,
    pub losses: LossSpec,
    pub learner: LearnerSpec,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Per-episode lemma checks (roughly doubles the cost of global-opt).
    #[serde(default)]
    pub check_invariants: bool,
    /// Attach a complexity report to each run.
    #[serde(default = "default_true")]
    pub measures: bool,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut config: ExperimentConfig = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        if let MdpSource::File { path } = &mut self.mdp {
            if path.is_relative() {
                *path = dir.join(&*path);
            }
        }
        let mut spec = &mut self.losses;
        loop {
            match spec {
                LossSpec::Script { path } => {
                    if path.is_relative() {
                        *path = dir.join(&*path);
                    }
                    break;
                }
                LossSpec::Truncated { base, .. } => spec = base,
                _ => break,
            }
        }
    }

    pub fn build_mdp(&self) -> Result<LayeredMdp> {
        match &self.mdp {
            MdpSource::File { path } => MdpDocument::load(path),
            MdpSource::Hard {
                horizon,
                layer_width,
                num_actions,
            } => {
                let mut sizes = vec![*layer_width; *horizon];
                if let Some(first) = sizes.first_mut() {
                    *first = 1;
                }
                LayeredMdp::uniform(&sizes, *num_actions)
            }
            MdpSource::Uniform {
                layer_sizes,
                num_actions,
            } => LayeredMdp::uniform(layer_sizes, *num_actions),
            MdpSource::Random {
                layer_sizes,
                num_actions,
                seed,
            } => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                LayeredMdp::random(layer_sizes, *num_actions, &mut rng)
            }
        }
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> Result<LayeredMdp> {
        let mdp = self.build_mdp()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let floor = mdp.min_episodes();
        if self.horizon < floor {
            return Err(Error::HorizonTooShort {
                t: self.horizon,
                floor,
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        self.build_losses(&mdp, 0)?;
        Ok(mdp)
    }

    pub fn build_losses(&self, mdp: &LayeredMdp, seed: u64) -> Result<LossProcess> {
        build_loss_spec(&self.losses, mdp, self.horizon, seed)
    }

    pub fn build_learner(&self, mdp: &LayeredMdp) -> Result<Box<dyn Learner + Send>> {
        Ok(match self.learner {
            LearnerSpec::GlobalOpt { predictor } => Box::new(GlobalOpt::new(
                mdp.clone(),
                self.horizon,
                GlobalOptConfig {
                    predictor,
                    tol: self.tol,
                    check_invariants: self.check_invariants,
                },
            )?),
            LearnerSpec::PolicyOpt { predictor } => Box::new(PolicyOpt::new(
                mdp.clone(),
                self.horizon,
                PolicyOptConfig {
                    predictor,
                    tol: self.tol,
                    check_invariants: self.check_invariants,
                },
            )?),
            LearnerSpec::Oreps { eta } => Box::new(Oreps::new(mdp.clone(), self.horizon, eta)?),
        })
    }
}

fn table_from_rows(mdp: &LayeredMdp, rows: &[Vec<f64>], what: &str) -> Result<SaTable> {
    if rows.len() != mdp.num_states() || rows.iter().any(|r| r.len() != mdp.num_actions()) {
        return Err(Error::Config(format!("{what} must be an S x A table")));
    }
    if rows.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::Config(format!("{what} has entries outside [0,1]")));
    }
    Ok(SaTable::from_vec(
        mdp.num_actions(),
        rows.iter().flatten().copied().collect(),
    ))
}

fn stochastic_or_corrupted(
    mdp: &LayeredMdp,
    dists: PairDistributions,
    corruption: &CorruptionStrategy,
    seed: u64,
) -> Result<LossProcess> {
    match corruption {
        CorruptionStrategy::None => Ok(LossProcess::stochastic(dists, seed)),
        other => LossProcess::corrupted(mdp, dists, other.clone(), seed),
    }
}

fn build_loss_spec(
    spec: &LossSpec,
    mdp: &LayeredMdp,
    horizon: usize,
    seed: u64,
) -> Result<LossProcess> {
    match spec {
        LossSpec::Pinned {
            alpha,
            epsilon,
            pin,
            delta,
            corruption,
        } => {
            let pin = match pin {
                Some(p) => p.clone(),
                None => {
                    // Draw the pinned actions exactly as the hard-instance constructor does.
                    let widths = mdp.layer_sizes();
                    if widths.len() >= 3
                        && mdp.num_actions() >= 3
                        && widths[1..].iter().all(|&w| w == widths[1])
                    {
                        make_hard_instance(
                            mdp.horizon(),
                            widths[1],
                            mdp.num_actions(),
                            *alpha,
                            *epsilon,
                            None,
                            seed,
                        )?
                        .2
                    } else {
                        use rand::{Rng, SeedableRng};
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                        (0..mdp.num_states())
                            .map(|_| rng.gen_range(0..mdp.num_actions()))
                            .collect()
                    }
                }
            };
            if pin.len() != mdp.num_states() || pin.iter().any(|&a| a >= mdp.num_actions()) {
                return Err(Error::Config("pin must list one valid action per state".into()));
            }
            if !(*alpha >= 0.0 && *epsilon >= 0.0 && alpha + epsilon <= 1.0) {
                return Err(Error::Config("need 0 <= alpha, epsilon and alpha + epsilon <= 1".into()));
            }
            let dists = PairDistributions::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
                let mean = if a == pin[s] { *alpha } else { alpha + epsilon };
                match delta {
                    None => DistributionSpec::Bernoulli { p: mean },
                    Some(d) => DistributionSpec::ScaledBernoulli { mean, delta: *d },
                }
            })?;
            stochastic_or_corrupted(mdp, dists, corruption, seed)
        }
        LossSpec::Table { dists, corruption } => {
            if dists.len() != mdp.num_states() || dists.iter().any(|r| r.len() != mdp.num_actions())
            {
                return Err(Error::Config("dists must be an S x A table".into()));
            }
            let dists =
                PairDistributions::new(mdp.num_actions(), dists.iter().flatten().copied().collect())?;
            stochastic_or_corrupted(mdp, dists, corruption, seed)
        }
        LossSpec::Script { path } => LossProcess::from_script_csv(path, mdp),
        LossSpec::Drift { a, b, period } => {
            if !(*period > 0.0) {
                return Err(Error::Config("period must be positive".into()));
            }
            Ok(LossProcess::Adversarial(AdversarialScript::Rule(ScriptRule::Drift {
                a: table_from_rows(mdp, a, "a")?,
                b: table_from_rows(mdp, b, "b")?,
                period: *period,
            })))
        }
        LossSpec::Switch { a, b, block } => {
            if *block == 0 {
                return Err(Error::Config("block must be positive".into()));
            }
            Ok(LossProcess::Adversarial(AdversarialScript::Rule(ScriptRule::Switch {
                a: table_from_rows(mdp, a, "a")?,
                b: table_from_rows(mdp, b, "b")?,
                block: *block,
            })))
        }
        LossSpec::Truncated { rho, base } => {
            let base = build_loss_spec(base, mdp, horizon, seed)?;
            LossProcess::truncated(base, *rho, horizon, mdp)
        }
    }
}
