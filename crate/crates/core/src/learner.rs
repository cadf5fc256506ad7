//! The interface shared by every learner, and the runtime invariant monitor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{OccupancyMeasure, Policy, Trajectory};

/// What a learner plays in the next real episode.
#[derive(Debug, Clone)]
pub struct Decision {
    pub policy: Policy,
    /// Occupancy of `policy` under the learner's model of the MDP.
    pub occupancy: OccupancyMeasure,
    /// Virtual episodes run before this decision.
    pub virtual_episodes: usize,
    pub solver_iters: usize,
}

/// Per-episode scalars reported to the harness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub max_eta: f64,
    pub min_eta: f64,
    pub virtual_count: usize,
}

/// An online learner under bandit feedback.
///
/// Each real episode is one `act` followed by one `update` with the losses
/// revealed along the sampled path.
pub trait Learner {
    fn name(&self) -> &'static str;
    fn act(&mut self) -> Result<Decision>;
    fn update(&mut self, traj: &Trajectory) -> Result<()>;
    fn diagnostics(&self) -> Diagnostics;
    fn monitor(&self) -> &InvariantMonitor;
}

/// Worst value seen for one checked quantity against its limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub worst: f64,
    pub limit: f64,
    pub evaluations: u64,
}

impl Check {
    pub fn holds(&self) -> bool {
        self.worst <= self.limit
    }
}

/// Records `value <= limit` checks by name, keeping the worst case.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantMonitor {
    checks: BTreeMap<String, Check>,
}

impl InvariantMonitor {
    pub fn record(&mut self, name: &'static str, value: f64, limit: f64) {
        if !self.checks.contains_key(name) {
            self.checks.insert(
                name.to_string(),
                Check {
                    worst: f64::NEG_INFINITY,
                    limit,
                    evaluations: 0,
                },
            );
        }
        let entry = self.checks.get_mut(name).expect("inserted above");
        entry.evaluations += 1;
        // NaN must register as a violation.
        if value > entry.worst || value.is_nan() {
            entry.worst = if value.is_nan() { f64::INFINITY } else { value };
        }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.get(name)
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, &Check)> {
        self.checks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn violations(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| !c.holds())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn all_hold(&self) -> bool {
        self.checks.values().all(Check::holds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_worst_and_flags_nan() {
        let mut m = InvariantMonitor::default();
        m.record("x", 0.1, 1.0);
        m.record("x", 0.5, 1.0);
        m.record("x", 0.2, 1.0);
        assert_eq!(m.get("x").unwrap().worst, 0.5);
        assert!(m.all_hold());
        m.record("y", f64::NAN, 1.0);
        assert_eq!(m.violations(), vec!["y"]);
    }
}
