//! Fixed-rate FTRL with a negative-entropy regularizer over occupancy
//! measures and the plain importance-weighted estimator `1[visited] ell / q`.

use crate::error::{Error, Result};
use crate::learner::{Decision, Diagnostics, InvariantMonitor, Learner};
use crate::mdp::{policy_from_occupancy, LayeredMdp, OccupancyMeasure, SaTable, Trajectory};
use crate::solver::{minimize_over_polytope, Regularizer, DEFAULT_TOL};

#[derive(Debug, Clone)]
pub struct Oreps {
    mdp: LayeredMdp,
    eta: f64,
    tol: f64,
    cumulative: SaTable,
    last_q: Option<OccupancyMeasure>,
    monitor: InvariantMonitor,
}

impl Oreps {
    /// `sqrt(H max(1, ln(SA/H)) / (S A T))`.
    pub fn default_eta(mdp: &LayeredMdp, horizon: usize) -> f64 {
        let h = mdp.horizon() as f64;
        let sa = (mdp.num_states() * mdp.num_actions()) as f64;
        (h * (sa / h).ln().max(1.0) / (sa * horizon as f64)).sqrt()
    }

    pub fn new(mdp: LayeredMdp, horizon: usize, eta: Option<f64>) -> Result<Self> {
        let floor = mdp.min_episodes();
        if horizon < floor {
            return Err(Error::HorizonTooShort { t: horizon, floor });
        }
        let eta = eta.unwrap_or_else(|| Self::default_eta(&mdp, horizon));
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta = {eta} must be positive")));
        }
        Ok(Self {
            eta,
            tol: DEFAULT_TOL,
            cumulative: mdp.zeros(),
            last_q: None,
            monitor: InvariantMonitor::default(),
            mdp,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl Learner for Oreps {
    fn name(&self) -> &'static str {
        "oreps"
    }

    fn act(&mut self) -> Result<Decision> {
        let sol = minimize_over_polytope(
            &self.mdp,
            &self.cumulative,
            Regularizer::NegEntropy {
                inv_eta: 1.0 / self.eta,
            },
            self.tol,
            self.last_q.as_ref(),
        )?;
        let policy = policy_from_occupancy(&sol.q);
        self.last_q = Some(sol.q.clone());
        Ok(Decision {
            policy,
            occupancy: sol.q,
            virtual_episodes: 0,
            solver_iters: sol.iterations,
        })
    }

    fn update(&mut self, traj: &Trajectory) -> Result<()> {
        let q = self
            .last_q
            .as_ref()
            .ok_or_else(|| Error::Invariant("update called before act".into()))?;
        for step in &traj.steps {
            let qv = q.get(step.state, step.action);
            *self.cumulative.get_mut(step.state, step.action) += step.loss / qv;
        }
        Ok(())
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            max_eta: self.eta,
            min_eta: self.eta,
            virtual_count: 0,
        }
    }

    fn monitor(&self) -> &InvariantMonitor {
        &self.monitor
    }
}
