//! Policy optimization: per-state optimistic FTRL with a log-barrier
//! regularizer, dilated exploration bonuses and virtual episodes.
//!
//! The policy is built backward over layers. At each state the simplex
//! problem uses the accumulated `Q_hat - B` plus the optimistic
//! `Q^pi(s, .; m)` computed from the deeper rows already fixed. When some
//! `eta(s,a) / q_t(s)` is too large, a virtual episode shrinks that single
//! learning rate instead of interacting with the environment.

use crate::error::{Error, Result};
use crate::learner::{Decision, Diagnostics, InvariantMonitor, Learner};
use crate::mdp::{
    expected_next, occupancy, LayeredMdp, LossTable, OccupancyMeasure, Policy, SaTable,
    Trajectory,
};
use crate::predictor::{Predictor, PredictorMode};
use crate::solver::{solve_simplex, SimplexProblem, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOptConfig {
    pub predictor: PredictorMode,
    pub tol: f64,
    pub check_invariants: bool,
}

impl Default for PolicyOptConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorMode::default(),
            tol: DEFAULT_TOL,
            check_invariants: false,
        }
    }
}

/// Everything fixed when a policy is chosen for an iteration.
#[derive(Debug, Clone)]
pub struct Round {
    pub policy: Policy,
    /// `Q^pi(.,.; m)`.
    pub q_pred: SaTable,
    pub occupancy: OccupancyMeasure,
    /// `q^pi(s) + gamma`.
    pub q_explore: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyOpt {
    mdp: LayeredMdp,
    horizon: usize,
    ln_t: f64,
    config: PolicyOptConfig,
    cumulative: SaTable,
    inv_eta: SaTable,
    predictor: Predictor,
    real_episodes: usize,
    total_iterations: usize,
    virtual_count: usize,
    /// `sum over real episodes of zeta / q_t(s)^2`.
    zeta_over_q_sum: SaTable,
    last_bonus: Option<(Vec<f64>, SaTable)>,
    pending: Option<Round>,
    monitor: InvariantMonitor,
}

impl PolicyOpt {
    pub fn new(mdp: LayeredMdp, horizon: usize, config: PolicyOptConfig) -> Result<Self> {
        let floor = mdp.min_episodes();
        if horizon < floor {
            return Err(Error::HorizonTooShort { t: horizon, floor });
        }
        let predictor = Predictor::new(config.predictor, mdp.num_states(), mdp.num_actions())?;
        let h = mdp.horizon() as f64;
        Ok(Self {
            ln_t: (horizon as f64).ln(),
            horizon,
            config,
            cumulative: mdp.zeros(),
            inv_eta: mdp.filled(180.0 * h * h * h),
            predictor,
            real_episodes: 0,
            total_iterations: 0,
            virtual_count: 0,
            zeta_over_q_sum: mdp.zeros(),
            last_bonus: None,
            pending: None,
            monitor: InvariantMonitor::default(),
            mdp,
        })
    }

    pub fn mdp(&self) -> &LayeredMdp {
        &self.mdp
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn real_episodes(&self) -> usize {
        self.real_episodes
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    pub fn virtual_count(&self) -> usize {
        self.virtual_count
    }

    pub fn etas(&self) -> SaTable {
        self.inv_eta.map(|w| 1.0 / w)
    }

    pub fn prediction(&self) -> &LossTable {
        self.predictor.current()
    }

    pub fn cumulative(&self) -> &SaTable {
        &self.cumulative
    }

    /// `(b, B)` from the last iteration.
    pub fn last_bonus(&self) -> Option<&(Vec<f64>, SaTable)> {
        self.last_bonus.as_ref()
    }

    /// `2000 H S A ln^2 T`.
    pub fn virtual_cap(&self) -> f64 {
        2000.0
            * (self.mdp.horizon() * self.mdp.num_states() * self.mdp.num_actions()) as f64
            * self.ln_t
            * self.ln_t
    }

    /// `sqrt(H S) / t` for the `t`-th real episode.
    pub fn gamma(&self) -> f64 {
        let hs = (self.mdp.horizon() * self.mdp.num_states()) as f64;
        hs.sqrt() / (self.real_episodes + 1) as f64
    }

    /// `1 / (18 sqrt(H^3 S))`.
    pub fn virtual_threshold(&self) -> f64 {
        let h = self.mdp.horizon() as f64;
        1.0 / (18.0 * (h * h * h * self.mdp.num_states() as f64).sqrt())
    }

    #[cfg(test)]
    pub(crate) fn inv_eta_mut(&mut self) -> &mut SaTable {
        &mut self.inv_eta
    }

    /// Backward construction of `pi_t` and `Q^{pi_t}(.,.; m_t)`.
    pub fn optimize_policy(&self) -> Result<(Policy, SaTable)> {
        let n_states = self.mdp.num_states();
        let n_actions = self.mdp.num_actions();
        let m = self.predictor.current();
        let mut policy = Policy::uniform(n_states, n_actions);
        let mut q_pred = self.mdp.zeros();
        let mut v_pred = vec![0.0; n_states];
        let etas = self.etas();
        let mut losses = vec![0.0; n_actions];
        for h in (0..self.mdp.horizon()).rev() {
            for s in self.mdp.layer(h) {
                for a in 0..n_actions {
                    let qa = m.get(s, a) + expected_next(&self.mdp, s, a, &v_pred);
                    q_pred.set(s, a, qa);
                    losses[a] = self.cumulative.get(s, a) + qa;
                }
                let sol = solve_simplex(
                    &SimplexProblem {
                        losses: &losses,
                        etas: etas.row(s),
                    },
                    self.config.tol,
                )?;
                policy.set_row(s, &sol.probs);
                v_pred[s] = sol.probs.iter().zip(q_pred.row(s)).map(|(p, q)| p * q).sum();
            }
        }
        Ok((policy, q_pred))
    }

    /// Policy, prediction values and exploration-inflated state occupancy.
    pub fn prepare_round(&self) -> Result<Round> {
        let (policy, q_pred) = self.optimize_policy()?;
        let occ = occupancy(&self.mdp, &policy);
        let gamma = self.gamma();
        let q_explore = (0..self.mdp.num_states())
            .map(|s| occ.state_mass(s) + gamma)
            .collect();
        Ok(Round {
            policy,
            q_pred,
            occupancy: occ,
            q_explore,
            gamma,
        })
    }

    /// `None` when the episode is real, otherwise the pair whose rate must shrink.
    pub fn check_virtual(&self, round: &Round) -> Option<(usize, usize)> {
        let n_actions = self.mdp.num_actions();
        let mut best = (0, 0);
        let mut best_ratio = f64::NEG_INFINITY;
        for s in 0..self.mdp.num_states() {
            for a in 0..n_actions {
                let ratio = 1.0 / (self.inv_eta.get(s, a) * round.q_explore[s]);
                // Strict comparison keeps the lexicographically first maximizer.
                if ratio > best_ratio {
                    best_ratio = ratio;
                    best = (s, a);
                }
            }
        }
        (best_ratio > self.virtual_threshold()).then_some(best)
    }

    /// `Q_hat` for a real (`traj = Some`) or virtual (`None`) iteration.
    pub fn q_estimate(&self, round: &Round, traj: Option<&Trajectory>) -> SaTable {
        let h = self.mdp.horizon() as f64;
        let mut q_hat = SaTable::from_fn(self.mdp.num_states(), self.mdp.num_actions(), |s, a| {
            round.q_pred.get(s, a) - round.gamma * h / round.q_explore[s]
        });
        if let Some(traj) = traj {
            let m = self.predictor.current();
            let ell_suffix = traj.suffix_sums(|st| st.loss);
            let m_suffix = traj.suffix_sums(|st| m.get(st.state, st.action));
            for (layer, step) in traj.steps.iter().enumerate() {
                let (s, a) = (step.state, step.action);
                let weight = round.q_explore[s] * round.policy.prob(s, a);
                *q_hat.get_mut(s, a) += (ell_suffix[layer] - m_suffix[layer]) / weight;
            }
        }
        q_hat
    }

    /// `zeta(s,a) = (1[s,a] - pi(a|s) 1[s])^2 (L_h - M_h)^2`, zero at unvisited states.
    pub fn zeta(&self, policy: &Policy, traj: &Trajectory) -> SaTable {
        let m = self.predictor.current();
        let ell_suffix = traj.suffix_sums(|st| st.loss);
        let m_suffix = traj.suffix_sums(|st| m.get(st.state, st.action));
        let mut zeta = self.mdp.zeros();
        for (layer, step) in traj.steps.iter().enumerate() {
            let diff = ell_suffix[layer] - m_suffix[layer];
            let s = step.state;
            for a in 0..self.mdp.num_actions() {
                let indicator = if a == step.action { 1.0 } else { 0.0 };
                let x = indicator - policy.prob(s, a);
                zeta.set(s, a, x * x * diff * diff);
            }
        }
        zeta
    }

    /// `b(s)` and the dilated `B(s,a)`, given the rates before and after this iteration.
    pub fn bonus(&self, round: &Round, inv_eta_before: &SaTable) -> (Vec<f64>, SaTable) {
        let h = self.mdp.horizon() as f64;
        let n_actions = self.mdp.num_actions();
        let b: Vec<f64> = (0..self.mdp.num_states())
            .map(|s| {
                let growth: f64 = (0..n_actions)
                    .map(|a| self.inv_eta.get(s, a) - inv_eta_before.get(s, a))
                    .sum();
                6.0 * growth * self.ln_t + 5.0 * round.gamma * h / round.q_explore[s]
            })
            .collect();
        let mut big_b = self.mdp.zeros();
        let mut v = vec![0.0; self.mdp.num_states()];
        let dilation = 1.0 + 1.0 / h;
        for layer in (0..self.mdp.horizon()).rev() {
            for s in self.mdp.layer(layer) {
                let mut vs = 0.0;
                for a in 0..n_actions {
                    let x = b[s] + dilation * expected_next(&self.mdp, s, a, &v);
                    big_b.set(s, a, x);
                    vs += round.policy.prob(s, a) * x;
                }
                v[s] = vs;
            }
        }
        (b, big_b)
    }

    /// Shrinks the rate of `pair` for a virtual iteration.
    pub fn virtual_update(&mut self, round: &Round, pair: (usize, usize)) -> Result<()> {
        let before = self.inv_eta.clone();
        let h = self.mdp.horizon() as f64;
        *self.inv_eta.get_mut(pair.0, pair.1) *= 1.0 + 1.0 / (324.0 * h * self.ln_t);
        let q_hat = self.q_estimate(round, None);
        let (b, big_b) = self.bonus(round, &before);
        self.finish_iteration(round, &before, &q_hat, b, big_b);
        self.virtual_count += 1;
        let cap = self.virtual_cap();
        self.monitor.record("virtual_count_under_cap", self.virtual_count as f64, cap);
        if self.virtual_count as f64 > cap {
            return Err(Error::Invariant(format!(
                "{} virtual episodes exceed the cap {cap}",
                self.virtual_count
            )));
        }
        Ok(())
    }

    fn finish_iteration(
        &mut self,
        round: &Round,
        inv_eta_before: &SaTable,
        q_hat: &SaTable,
        b: Vec<f64>,
        big_b: SaTable,
    ) {
        if self.config.check_invariants {
            let h = self.mdp.horizon() as f64;
            let dilation = 1.0 + 1.0 / h;
            let mut v = vec![0.0; self.mdp.num_states()];
            for s in 0..self.mdp.num_states() {
                v[s] = (0..self.mdp.num_actions())
                    .map(|a| round.policy.prob(s, a) * big_b.get(s, a))
                    .sum();
            }
            let mut residual = 0.0f64;
            let mut eta_pi_b = 0.0f64;
            for s in 0..self.mdp.num_states() {
                for a in 0..self.mdp.num_actions() {
                    let x = big_b.get(s, a);
                    let r = x - b[s] - dilation * expected_next(&self.mdp, s, a, &v);
                    residual = residual.max(r.abs() / (1.0 + x.abs()));
                    eta_pi_b = eta_pi_b.max(round.policy.prob(s, a) * x / inv_eta_before.get(s, a));
                }
            }
            self.monitor.record("bonus_recursion_residual", residual, 1e-10);
            self.monitor.record("eta_pi_bonus", eta_pi_b * 6.0 * h, 1.0);
            let limit = (h * self.mdp.num_states() as f64).sqrt() / round.gamma + 15.0 * h * h;
            self.monitor.record("bonus_magnitude", big_b.max() / limit, 1.0);
        }
        for i in 0..q_hat.values().len() {
            self.cumulative.values_mut()[i] += q_hat.values()[i] - big_b.values()[i];
        }
        self.last_bonus = Some((b, big_b));
        self.total_iterations += 1;
    }
}

impl Learner for PolicyOpt {
    fn name(&self) -> &'static str {
        "policy_opt"
    }

    fn act(&mut self) -> Result<Decision> {
        let start_virtual = self.virtual_count;
        let mut solves = 0;
        loop {
            let round = self.prepare_round()?;
            solves += 1;
            match self.check_virtual(&round) {
                Some(pair) => self.virtual_update(&round, pair)?,
                None => {
                    let decision = Decision {
                        policy: round.policy.clone(),
                        occupancy: round.occupancy.clone(),
                        virtual_episodes: self.virtual_count - start_virtual,
                        solver_iters: solves,
                    };
                    self.pending = Some(round);
                    return Ok(decision);
                }
            }
        }
    }

    fn update(&mut self, traj: &Trajectory) -> Result<()> {
        let round = self
            .pending
            .take()
            .ok_or_else(|| Error::Invariant("update called before act".into()))?;
        let h = self.mdp.horizon() as f64;
        let q_hat = self.q_estimate(&round, Some(traj));
        let zeta = self.zeta(&round.policy, traj);
        let before = self.inv_eta.clone();
        let n_actions = self.mdp.num_actions();
        for s in 0..self.mdp.num_states() {
            let qs = round.q_explore[s];
            for a in 0..n_actions {
                let z = zeta.get(s, a);
                let w = before.get(s, a);
                *self.inv_eta.get_mut(s, a) = w + z / (w * qs * qs * self.ln_t);
                *self.zeta_over_q_sum.get_mut(s, a) += z / (qs * qs);
            }
        }
        if self.config.check_invariants {
            self.monitor.record("zeta_at_most_h_squared", zeta.max() / (h * h), 1.0 + 1e-12);
            let worst = before
                .values()
                .iter()
                .zip(self.zeta_over_q_sum.values())
                .map(|(w, sum)| sum.sqrt() / (w * 2.0 * self.ln_t.sqrt()))
                .fold(0.0, f64::max);
            self.monitor.record("policy_learning_rate_bound", worst, 1.0);
        }
        let (b, big_b) = self.bonus(&round, &before);
        self.finish_iteration(&round, &before, &q_hat, b, big_b);
        self.predictor.update(traj);
        self.real_episodes += 1;
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            max_eta: 1.0 / self.inv_eta.min(),
            min_eta: 1.0 / self.inv_eta.max(),
            virtual_count: self.virtual_count,
        }
    }

    fn monitor(&self) -> &InvariantMonitor {
        &self.monitor
    }
}
