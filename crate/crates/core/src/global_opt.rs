//! Optimistic FTRL over occupancy measures with a log-barrier regularizer,
//! loss shifting and per-pair adaptive learning rates.
//!
//! Each episode plays the occupancy
//! `q_t = argmin_q <q, sum_{tau<t} ell_hat_tau + m_t> + sum (1/eta_t) ln(1/q)`
//! and feeds back the optimistic importance-weighted estimator
//! `ell_hat = m + 1[visited] (ell - m) / q`.

use crate::error::{Error, Result};
use crate::learner::{Decision, Diagnostics, InvariantMonitor, Learner};
use crate::mdp::{
    occupancy, policy_from_occupancy, value_functions, LayeredMdp, LossTable, OccupancyMeasure,
    Policy, SaTable, Trajectory,
};
use crate::predictor::{Predictor, PredictorMode};
use crate::solver::{solve_occupancy, PolytopeProblem, DEFAULT_TOL};

/// Probabilities below this at a visited pair mean the solver lost interiority.
pub const MIN_VISIT_PROB: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalOptConfig {
    pub predictor: PredictorMode,
    pub tol: f64,
    /// Run the per-episode lemma checks, including a second solve for the
    /// shift-equivalence comparison.
    pub check_invariants: bool,
}

impl Default for GlobalOptConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorMode::default(),
            tol: DEFAULT_TOL,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Played {
    q: OccupancyMeasure,
    policy: Policy,
}

#[derive(Debug, Clone)]
pub struct GlobalOpt {
    mdp: LayeredMdp,
    horizon: usize,
    ln_t: f64,
    config: GlobalOptConfig,
    cumulative: SaTable,
    inv_eta: SaTable,
    zeta_sum: SaTable,
    predictor: Predictor,
    episodes: usize,
    last_q: Option<OccupancyMeasure>,
    shadow_cumulative: SaTable,
    shadow_q: Option<OccupancyMeasure>,
    played: Option<Played>,
    monitor: InvariantMonitor,
}

impl GlobalOpt {
    pub fn new(mdp: LayeredMdp, horizon: usize, config: GlobalOptConfig) -> Result<Self> {
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
            inv_eta: mdp.filled(2.0 * h),
            zeta_sum: mdp.zeros(),
            predictor,
            episodes: 0,
            last_q: None,
            shadow_cumulative: mdp.zeros(),
            shadow_q: None,
            played: None,
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

    /// Completed episodes.
    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn etas(&self) -> SaTable {
        self.inv_eta.map(|w| 1.0 / w)
    }

    pub fn prediction(&self) -> &LossTable {
        self.predictor.current()
    }

    pub fn cumulative_estimate(&self) -> &SaTable {
        &self.cumulative
    }

    /// Solves the current OFTRL problem without changing any state.
    pub fn solve(&self) -> Result<(OccupancyMeasure, Policy, usize)> {
        let losses = self.cumulative.add(self.predictor.current());
        let etas = self.etas();
        let sol = solve_occupancy(
            &PolytopeProblem {
                mdp: &self.mdp,
                losses: &losses,
                etas: &etas,
            },
            self.config.tol,
            self.last_q.as_ref(),
        )?;
        let policy = policy_from_occupancy(&sol.q);
        Ok((sol.q, policy, sol.iterations))
    }

    /// Learning-rate update for one episode; returns `zeta`.
    pub fn update_learning_rates(
        &mut self,
        q: &OccupancyMeasure,
        ell_tilde: &SaTable,
        shift: &SaTable,
    ) -> Result<SaTable> {
        let zeta = SaTable::from_fn(self.mdp.num_states(), self.mdp.num_actions(), |s, a| {
            let qv = q.get(s, a);
            let x = ell_tilde.get(s, a);
            let y = x + shift.get(s, a);
            qv * qv * (x * x).min(y * y)
        });
        let worst = zeta.max();
        if !(worst <= 1.0 + 1e-9) || zeta.min() < 0.0 {
            return Err(Error::Invariant(format!("zeta = {worst} outside [0, 1]")));
        }
        self.monitor.record("zeta_in_unit_interval", worst, 1.0 + 1e-9);
        for i in 0..zeta.values().len() {
            let w = self.inv_eta.values()[i];
            let z = zeta.values()[i];
            self.inv_eta.values_mut()[i] = w + z / (w * self.ln_t);
        }
        Ok(zeta)
    }

    fn check_learning_rate_bound(&mut self, etas_before: &SaTable) {
        let h = self.mdp.horizon() as f64;
        let base = 2.0 * h * h * self.ln_t;
        let worst = etas_before
            .values()
            .iter()
            .zip(self.zeta_sum.values())
            .map(|(eta, z)| eta * (base + z).sqrt() / self.ln_t.sqrt())
            .fold(0.0, f64::max);
        self.monitor.record("global_learning_rate_bound", worst, 1.0 + 1e-12);
    }

    fn check_shift_identity(&mut self, policy: &Policy, ell_tilde: &SaTable, shift: &SaTable) {
        let v0 = value_functions(&self.mdp, policy, ell_tilde).initial_value();
        let n_states = self.mdp.num_states();
        let n_actions = self.mdp.num_actions();
        let alternate = Policy::deterministic(
            &(0..n_states).map(|s| (s + self.episodes) % n_actions).collect::<Vec<_>>(),
            n_actions,
        );
        let worst = [policy.clone(), Policy::uniform(n_states, n_actions), alternate]
            .iter()
            .map(|pi| (occupancy(&self.mdp, pi).expected_loss(shift) + v0).abs())
            .fold(0.0, f64::max);
        self.monitor.record("loss_shift_identity", worst, 1e-8);
    }
}

/// `m + 1[visited] (ell - m) / q`, equal to `m` off the trajectory.
pub fn estimate(q: &OccupancyMeasure, traj: &Trajectory, m: &LossTable) -> Result<LossTable> {
    let mut out = m.clone();
    for step in &traj.steps {
        let (s, a) = (step.state, step.action);
        let qv = q.get(s, a);
        if !(qv >= MIN_VISIT_PROB) {
            return Err(Error::Invariant(format!("visited pair ({s},{a}) has q = {qv}")));
        }
        out.set(s, a, m.get(s, a) + (step.loss - m.get(s, a)) / qv);
    }
    Ok(out)
}

/// `g(s,a) = Q^pi(s,a; ell_tilde) - V^pi(s; ell_tilde) - ell_tilde(s,a)`.
pub fn loss_shift(mdp: &LayeredMdp, policy: &Policy, ell_tilde: &SaTable) -> SaTable {
    let vf = value_functions(mdp, policy, ell_tilde);
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        vf.q.get(s, a) - vf.v[s] - ell_tilde.get(s, a)
    })
}

impl Learner for GlobalOpt {
    fn name(&self) -> &'static str {
        "global_opt"
    }

    fn act(&mut self) -> Result<Decision> {
        let (q, policy, iters) = self.solve()?;
        if self.config.check_invariants {
            let losses = self.shadow_cumulative.add(self.predictor.current());
            let etas = self.etas();
            let shadow = solve_occupancy(
                &PolytopeProblem {
                    mdp: &self.mdp,
                    losses: &losses,
                    etas: &etas,
                },
                self.config.tol,
                self.shadow_q.as_ref(),
            )?;
            self.monitor.record(
                "shift_equivalence",
                shadow.q.table().max_abs_diff(q.table()),
                1e-6,
            );
            self.shadow_q = Some(shadow.q);
        }
        let min_q = q.table().min();
        self.monitor.record("interior_occupancy", -min_q, -1e-300);
        self.last_q = Some(q.clone());
        self.played = Some(Played {
            q: q.clone(),
            policy: policy.clone(),
        });
        Ok(Decision {
            policy,
            occupancy: q,
            virtual_episodes: 0,
            solver_iters: iters,
        })
    }

    fn update(&mut self, traj: &Trajectory) -> Result<()> {
        let Played { q, policy } = self
            .played
            .take()
            .ok_or_else(|| Error::Invariant("update called before act".into()))?;
        let m = self.predictor.current().clone();
        let ell_hat = estimate(&q, traj, &m)?;
        let ell_tilde = ell_hat.sub(&m);
        let shift = loss_shift(&self.mdp, &policy, &ell_tilde);
        let etas_before = self.etas();

        let zeta = self.update_learning_rates(&q, &ell_tilde, &shift)?;
        self.zeta_sum.add_assign(&zeta);

        if self.config.check_invariants {
            self.check_shift_identity(&policy, &ell_tilde, &shift);
            self.check_learning_rate_bound(&etas_before);
            let h = self.mdp.horizon() as f64;
            let mut worst = f64::NEG_INFINITY;
            for s in 0..self.mdp.num_states() {
                for a in 0..self.mdp.num_actions() {
                    let floor = -h / q.get(s, a);
                    let lhs = ell_tilde.get(s, a) + shift.get(s, a);
                    worst = worst.max((floor - lhs) / (1.0 - floor));
                }
            }
            self.monitor.record("estimator_lower_bound", worst, 1e-12);
            self.shadow_cumulative.add_assign(&ell_hat.add(&shift));
        }

        self.cumulative.add_assign(&ell_hat);
        self.predictor.update(traj);
        self.episodes += 1;
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            max_eta: 1.0 / self.inv_eta.min(),
            min_eta: 1.0 / self.inv_eta.max(),
            virtual_count: 0,
        }
    }

    fn monitor(&self) -> &InvariantMonitor {
        &self.monitor
    }
}
