//! Loss predictors `m_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{LossTable, SaTable, Trajectory};

pub const DEFAULT_XI: f64 = 0.25;
pub const INITIAL_PREDICTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorMode {
    /// `m <- (1 - xi) m + xi ell` on visited pairs.
    GradientDescent {
        #[serde(default = "default_xi")]
        xi: f64,
    },
    /// Running mean of observed losses; unvisited pairs keep the initial 1/2.
    EmpiricalMean,
}

fn default_xi() -> f64 {
    DEFAULT_XI
}

impl Default for PredictorMode {
    fn default() -> Self {
        PredictorMode::GradientDescent { xi: DEFAULT_XI }
    }
}

impl PredictorMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PredictorMode::GradientDescent { xi } if !(xi > 0.0 && xi <= 0.5) => Err(
                Error::InvalidParameter(format!("xi = {xi} is outside (0, 1/2]")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    mode: PredictorMode,
    m: LossTable,
    sums: SaTable,
    counts: Vec<u64>,
}

impl Predictor {
    pub fn new(mode: PredictorMode, num_states: usize, num_actions: usize) -> Result<Self> {
        mode.validate()?;
        Ok(Self {
            mode,
            m: SaTable::filled(num_states, num_actions, INITIAL_PREDICTION),
            sums: SaTable::zeros(num_states, num_actions),
            counts: vec![0; num_states * num_actions],
        })
    }

    pub fn mode(&self) -> PredictorMode {
        self.mode
    }

    pub fn current(&self) -> &LossTable {
        &self.m
    }

    pub fn update(&mut self, traj: &Trajectory) {
        let n_actions = self.m.num_actions();
        for step in &traj.steps {
            let (s, a) = (step.state, step.action);
            match self.mode {
                PredictorMode::GradientDescent { xi } => {
                    let m = self.m.get_mut(s, a);
                    *m = (1.0 - xi) * *m + xi * step.loss;
                }
                PredictorMode::EmpiricalMean => {
                    let i = s * n_actions + a;
                    self.counts[i] += 1;
                    *self.sums.get_mut(s, a) += step.loss;
                    self.m.set(s, a, self.sums.get(s, a) / self.counts[i] as f64);
                }
            }
        }
    }
}
