//! Loss processes: scripted adversarial sequences, i.i.d. stochastic losses,
//! corrupted stochastic losses and truncated instances.
//!
//! Every process emits a pair `(ell, ell_clean)` per episode. Only corrupted
//! processes make the two differ. Stochastic draws for episode `t` come from a
//! ChaCha stream keyed by `(seed, t)`, so a process is reproducible from its
//! seed alone.

use std::collections::HashMap;
use std::path::Path as FsPath;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{best_deterministic_policy, LayeredMdp, LossTable, SaTable};

/// Loss distribution of one state-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Bernoulli { p: f64 },
    /// Two-point law on `{mean - delta, mean + delta}` with equal mass.
    ScaledBernoulli { mean: f64, delta: f64 },
    Constant { value: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistributionSpec::Bernoulli { p } => (0.0..=1.0).contains(&p),
            DistributionSpec::ScaledBernoulli { mean, delta } => {
                delta >= 0.0 && mean - delta >= 0.0 && mean + delta <= 1.0
            }
            DistributionSpec::Constant { value } => (0.0..=1.0).contains(&value),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("support of {self:?} is not inside [0,1]")))
        }
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            DistributionSpec::Bernoulli { p } => (p, p * (1.0 - p)),
            DistributionSpec::ScaledBernoulli { mean, delta } => (mean, delta * delta),
            DistributionSpec::Constant { value } => (value, 0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Bernoulli { p } => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionSpec::ScaledBernoulli { mean, delta } => {
                if rng.gen::<bool>() {
                    mean + delta
                } else {
                    mean - delta
                }
            }
            DistributionSpec::Constant { value } => value,
        }
    }
}

/// Per-pair distributions, indexed `s * A + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistributions {
    num_actions: usize,
    specs: Vec<DistributionSpec>,
}

impl PairDistributions {
    pub fn new(num_actions: usize, specs: Vec<DistributionSpec>) -> Result<Self> {
        if num_actions == 0 || specs.len() % num_actions != 0 {
            return Err(Error::InvalidParameter(
                "distribution table is not a whole number of rows".into(),
            ));
        }
        for spec in &specs {
            spec.validate()?;
        }
        Ok(Self { num_actions, specs })
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> DistributionSpec,
    ) -> Result<Self> {
        let specs = (0..num_states)
            .flat_map(|s| (0..num_actions).map(move |a| (s, a)))
            .map(|(s, a)| f(s, a))
            .collect();
        Self::new(num_actions, specs)
    }

    pub fn get(&self, s: usize, a: usize) -> DistributionSpec {
        self.specs[s * self.num_actions + a]
    }

    pub fn num_states(&self) -> usize {
        self.specs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Mean and variance tables.
    pub fn moments(&self) -> (LossTable, LossTable) {
        let (mu, var): (Vec<f64>, Vec<f64>) = self.specs.iter().map(|d| d.moments()).unzip();
        (
            SaTable::from_vec(self.num_actions, mu),
            SaTable::from_vec(self.num_actions, var),
        )
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LossTable {
        SaTable::from_vec(
            self.num_actions,
            self.specs.iter().map(|d| d.sample(rng)).collect(),
        )
    }
}

/// How clean stochastic losses are corrupted before being revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionStrategy {
    None,
    /// For the first `episodes` episodes, raise the loss on every pair chosen
    /// by the mean-optimal policy to `min(1, clean + delta)`. With `budget`
    /// set, corruption also stops once the realized total reaches it.
    PrefixFlip {
        episodes: usize,
        #[serde(default = "one")]
        delta: f64,
        #[serde(default)]
        budget: Option<f64>,
    },
    /// For the first `episodes` episodes, set the listed pairs to `value`.
    TargetedState {
        pairs: Vec<(usize, usize)>,
        episodes: usize,
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Closed-form adversarial rules, evaluated lazily.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptRule {
    /// `ell_t = a + (b - a) (1 - cos(2 pi t / period)) / 2`.
    Drift {
        a: LossTable,
        b: LossTable,
        period: f64,
    },
    /// `a` on blocks of `block` episodes, alternating with `b`.
    Switch {
        a: LossTable,
        b: LossTable,
        block: usize,
    },
}

impl ScriptRule {
    fn eval(&self, t: usize) -> LossTable {
        match self {
            ScriptRule::Drift { a, b, period } => {
                let w = 0.5 * (1.0 - (std::f64::consts::TAU * t as f64 / period).cos());
                a.zip_with(b, |x, y| x + (y - x) * w)
            }
            ScriptRule::Switch { a, b, block } => {
                if ((t - 1) / block) % 2 == 0 {
                    a.clone()
                } else {
                    b.clone()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdversarialScript {
    Table(Vec<LossTable>),
    Rule(ScriptRule),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossProcess {
    Adversarial(AdversarialScript),
    Stochastic {
        dists: PairDistributions,
        seed: u64,
    },
    Corrupted {
        dists: PairDistributions,
        seed: u64,
        strategy: CorruptionStrategy,
        /// Pairs targeted by the strategy, resolved against the MDP.
        targets: Vec<(usize, usize)>,
        layer_of: Vec<usize>,
        realized: f64,
    },
    Truncated {
        base: Box<LossProcess>,
        /// Episodes `1..=active` come from `base`; the rest are zero.
        active: usize,
        num_states: usize,
        num_actions: usize,
    },
}

impl LossProcess {
    pub fn stochastic(dists: PairDistributions, seed: u64) -> Self {
        LossProcess::Stochastic { dists, seed }
    }

    pub fn corrupted(
        mdp: &LayeredMdp,
        dists: PairDistributions,
        strategy: CorruptionStrategy,
        seed: u64,
    ) -> Result<Self> {
        let targets = match &strategy {
            CorruptionStrategy::None => Vec::new(),
            CorruptionStrategy::PrefixFlip { delta, budget, .. } => {
                if !(*delta >= 0.0) || budget.is_some_and(|b| !(b >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "prefix flip needs delta >= 0 and budget >= 0".into(),
                    ));
                }
                let (mu, _) = dists.moments();
                let (pi_star, _) = best_deterministic_policy(mdp, &mu);
                pi_star
                    .as_deterministic()
                    .expect("greedy policy is deterministic")
                    .into_iter()
                    .enumerate()
                    .collect()
            }
            CorruptionStrategy::TargetedState { pairs, value, .. } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(Error::InvalidParameter("corrupted value outside [0,1]".into()));
                }
                if pairs
                    .iter()
                    .any(|&(s, a)| s >= mdp.num_states() || a >= mdp.num_actions())
                {
                    return Err(Error::InvalidParameter("targeted pair out of range".into()));
                }
                pairs.clone()
            }
        };
        Ok(LossProcess::Corrupted {
            dists,
            seed,
            strategy,
            targets,
            layer_of: (0..mdp.num_states()).map(|s| mdp.layer_of(s)).collect(),
            realized: 0.0,
        })
    }

    /// Zeroes every episode after `floor(rho * T)`.
    pub fn truncated(base: LossProcess, rho: f64, horizon: usize, mdp: &LayeredMdp) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidParameter(format!("rho = {rho} is outside (0, 1]")));
        }
        Ok(LossProcess::Truncated {
            base: Box::new(base),
            active: (rho * horizon as f64).floor() as usize,
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
        })
    }

    /// Loads a `t,s,a,loss` CSV. Episode 1 must list every pair; later
    /// episodes inherit unlisted pairs from the previous one.
    pub fn from_script_csv(path: impl AsRef<FsPath>, mdp: &LayeredMdp) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows: HashMap<usize, Vec<(usize, usize, f64)>> = HashMap::new();
        let mut last = 0;
        for record in reader.deserialize() {
            let (t, s, a, loss): (usize, usize, usize, f64) = record?;
            if t == 0 || s >= mdp.num_states() || a >= mdp.num_actions() {
                return Err(Error::Config(format!("script row ({t},{s},{a}) out of range")));
            }
            if !(0.0..=1.0).contains(&loss) {
                return Err(Error::Config(format!("script loss {loss} at t={t} outside [0,1]")));
            }
            last = last.max(t);
            rows.entry(t).or_default().push((s, a, loss));
        }
        let mut tables = Vec::with_capacity(last);
        let mut current = SaTable::filled(mdp.num_states(), mdp.num_actions(), f64::NAN);
        for t in 1..=last {
            for &(s, a, loss) in rows.get(&t).map(Vec::as_slice).unwrap_or(&[]) {
                current.set(s, a, loss);
            }
            if t == 1 && !current.is_finite() {
                return Err(Error::Config("episode 1 of the script is incomplete".into()));
            }
            tables.push(current.clone());
        }
        Ok(LossProcess::Adversarial(AdversarialScript::Table(tables)))
    }

    /// `(ell_t, ell_clean_t)` for episode `t >= 1`. Calls must be in increasing
    /// `t` for budgeted corruption.
    pub fn next_loss(&mut self, t: usize) -> Result<(LossTable, LossTable)> {
        if t == 0 {
            return Err(Error::InvalidParameter("episodes are numbered from 1".into()));
        }
        match self {
            LossProcess::Adversarial(AdversarialScript::Table(tables)) => {
                let table = tables.get(t - 1).ok_or(Error::ScriptExhausted(t))?;
                Ok((table.clone(), table.clone()))
            }
            LossProcess::Adversarial(AdversarialScript::Rule(rule)) => {
                let table = rule.eval(t);
                Ok((table.clone(), table))
            }
            LossProcess::Stochastic { dists, seed } => {
                let table = dists.sample(&mut episode_rng(*seed, t));
                Ok((table.clone(), table))
            }
            LossProcess::Corrupted {
                dists,
                seed,
                strategy,
                targets,
                layer_of,
                realized,
            } => {
                let clean = dists.sample(&mut episode_rng(*seed, t));
                let mut ell = clean.clone();
                match strategy {
                    CorruptionStrategy::None => {}
                    CorruptionStrategy::PrefixFlip {
                        episodes,
                        delta,
                        budget,
                    } => {
                        let open = budget.map_or(true, |b| *realized < b);
                        if t <= *episodes && open {
                            for &(s, a) in targets.iter() {
                                let v = ell.get(s, a);
                                ell.set(s, a, (v + *delta).min(1.0));
                            }
                        }
                    }
                    CorruptionStrategy::TargetedState {
                        episodes, value, ..
                    } => {
                        if t <= *episodes {
                            for &(s, a) in targets.iter() {
                                ell.set(s, a, *value);
                            }
                        }
                    }
                }
                *realized += corruption_by_layer(layer_of, &ell, &clean);
                Ok((ell, clean))
            }
            LossProcess::Truncated {
                base,
                active,
                num_states,
                num_actions,
            } => {
                if t <= *active {
                    base.next_loss(t)
                } else {
                    let zero = SaTable::zeros(*num_states, *num_actions);
                    Ok((zero.clone(), zero))
                }
            }
        }
    }

    /// Analytic mean and variance of the clean losses.
    pub fn moments(&self) -> Result<(LossTable, LossTable)> {
        match self {
            LossProcess::Stochastic { dists, .. } | LossProcess::Corrupted { dists, .. } => {
                Ok(dists.moments())
            }
            _ => Err(Error::NotStochastic),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        self.moments().is_ok()
    }
}

fn episode_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

fn corruption_by_layer(layer_of: &[usize], ell: &LossTable, clean: &LossTable) -> f64 {
    let horizon = layer_of.last().map_or(0, |h| h + 1);
    let mut worst = vec![0.0f64; horizon];
    for (s, &h) in layer_of.iter().enumerate() {
        for (x, y) in ell.row(s).iter().zip(clean.row(s)) {
            worst[h] = worst[h].max((x - y).abs());
        }
    }
    worst.iter().sum()
}

/// `sum_h max_{s in layer h, a} |ell_clean - ell|` for one episode.
pub fn corruption_increment(mdp: &LayeredMdp, ell: &LossTable, clean: &LossTable) -> f64 {
    (0..mdp.horizon())
        .map(|h| {
            mdp.layer_values(ell, h)
                .iter()
                .zip(mdp.layer_values(clean, h))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .sum()
}

/// Total corruption of a recorded run.
pub fn measured_corruption(mdp: &LayeredMdp, history: &[(LossTable, LossTable)]) -> f64 {
    history
        .iter()
        .map(|(ell, clean)| corruption_increment(mdp, ell, clean))
        .sum()
}

/// Uniform-transition instance where the pinned action at every state has
/// `Ber(alpha)` losses and all other actions `Ber(alpha + epsilon)`.
///
/// Returns the MDP, the loss process and the pinned action per state. When
/// `pin` is `None` the pinned actions are drawn from `seed`.
pub fn make_hard_instance(
    horizon: usize,
    layer_width: usize,
    num_actions: usize,
    alpha: f64,
    epsilon: f64,
    pin: Option<Vec<usize>>,
    seed: u64,
) -> Result<(LayeredMdp, LossProcess, Vec<usize>)> {
    if horizon < 3 || num_actions < 3 || layer_width == 0 {
        return Err(Error::InvalidParameter(
            "hard instance needs H >= 3, A >= 3 and nonempty layers".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(epsilon >= 0.0 && epsilon < 1.0 - alpha) {
        return Err(Error::InvalidParameter(format!(
            "need alpha in (0,1) and epsilon in [0, 1 - alpha), got {alpha}, {epsilon}"
        )));
    }
    let mut sizes = vec![layer_width; horizon];
    sizes[0] = 1;
    let mdp = LayeredMdp::uniform(&sizes, num_actions)?;
    let pin = match pin {
        Some(p) => {
            if p.len() != mdp.num_states() || p.iter().any(|&a| a >= num_actions) {
                return Err(Error::InvalidParameter("pinned policy has the wrong shape".into()));
            }
            p
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let actions: Vec<usize> = (0..num_actions).collect();
            (0..mdp.num_states())
                .map(|_| *actions.choose(&mut rng).expect("A >= 3"))
                .collect()
        }
    };
    let dists = PairDistributions::from_fn(mdp.num_states(), num_actions, |s, a| {
        DistributionSpec::Bernoulli {
            p: if a == pin[s] { alpha } else { alpha + epsilon },
        }
    })?;
    Ok((mdp, LossProcess::stochastic(dists, seed), pin))
}

/// Hard instance sized by the total state count `S = 1 + (H - 1) * width`.
pub fn hard_instance_widths(horizon: usize, num_states: usize) -> Result<usize> {
    if horizon < 2 || num_states <= 1 || (num_states - 1) % (horizon - 1) != 0 {
        return Err(Error::InvalidParameter(format!(
            "S - 1 = {} is not divisible by H - 1 = {}",
            num_states.saturating_sub(1),
            horizon.saturating_sub(1)
        )));
    }
    Ok((num_states - 1) / (horizon - 1))
}
