//! Layered episodic MDPs with known transitions.
//!
//! States carry global contiguous indices; layer `h` owns the index range
//! `layer_offsets[h]..layer_offsets[h + 1]` and layer 0 holds the single
//! initial state `0`. The terminal layer is implicit: rows of the last
//! layer are empty and every episode ends after exactly `H` steps.
//!
//! All per-(state, action) quantities live in dense [`SaTable`]s indexed
//! `s * A + a`.

mod dp;
mod io;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dp::{
    best_deterministic_policy, conditional_occupancy, occupancy, policy_from_occupancy,
    sample_trajectory, suboptimality_gaps, value_functions, ValueFunctions,
};
pub use io::{validate_mdp, MdpDocument, Violation};
pub(crate) use dp::{expected_next, greedy_backward};

/// Row-sum tolerance for transition rows and policy rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A dense real-valued table over state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTable {
    num_actions: usize,
    values: Vec<f64>,
}

/// Losses, predictions, estimators and Q-values all share one representation.
pub type LossTable = SaTable;

impl SaTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_vec(num_actions: usize, values: Vec<f64>) -> Self {
        assert!(num_actions > 0 && values.len() % num_actions == 0);
        Self {
            num_actions,
            values,
        }
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_actions,
            values,
        }
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    #[inline]
    pub fn get_mut(&mut self, s: usize, a: usize) -> &mut f64 {
        &mut self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dot(&self, other: &SaTable) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn add_assign(&mut self, other: &SaTable) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += y;
        }
    }

    pub fn sub(&self, other: &SaTable) -> SaTable {
        self.zip_with(other, |x, y| x - y)
    }

    pub fn add(&self, other: &SaTable) -> SaTable {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn zip_with(&self, other: &SaTable, f: impl Fn(f64, f64) -> f64) -> SaTable {
        SaTable {
            num_actions: self.num_actions,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SaTable {
        SaTable {
            num_actions: self.num_actions,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SaTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }
}

/// Per-state action distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy(SaTable);

impl Policy {
    /// Wraps a table whose rows are probability vectors (checked in debug builds).
    pub fn from_table(table: SaTable) -> Self {
        debug_assert!((0..table.num_states()).all(|s| {
            let row = table.row(s);
            row.iter().all(|&p| p >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() < 1e-9
        }));
        Self(table)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self(SaTable::filled(
            num_states,
            num_actions,
            1.0 / num_actions as f64,
        ))
    }

    /// One-hot policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Self {
        Self(SaTable::from_fn(actions.len(), num_actions, |s, a| {
            if actions[s] == a {
                1.0
            } else {
                0.0
            }
        }))
    }

    /// Random interior policy with rows drawn from a flat Dirichlet.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Self {
        let mut table = SaTable::zeros(num_states, num_actions);
        for s in 0..num_states {
            let row = table.row_mut(s);
            for p in row.iter_mut() {
                *p = -(1.0 - rng.gen::<f64>()).ln();
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
        }
        Self(table)
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.0.get(s, a)
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        self.0.row(s)
    }

    pub fn set_row(&mut self, s: usize, probs: &[f64]) {
        self.0.row_mut(s).copy_from_slice(probs);
    }

    pub fn table(&self) -> &SaTable {
        &self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.0.num_actions()
    }

    /// Action index per state if every row is one-hot.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        (0..self.num_states())
            .map(|s| self.row(s).iter().position(|&p| p == 1.0))
            .collect()
    }
}

/// Visitation probabilities `q(s, a)` induced by a policy under the known kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure(SaTable);

impl OccupancyMeasure {
    pub fn from_table(table: SaTable) -> Self {
        Self(table)
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.0.get(s, a)
    }

    /// `q(s) = sum_a q(s, a)`.
    pub fn state_mass(&self, s: usize) -> f64 {
        self.0.row(s).iter().sum()
    }

    pub fn table(&self) -> &SaTable {
        &self.0
    }

    pub fn into_table(self) -> SaTable {
        self.0
    }

    /// Expected episode loss `<q, loss>`.
    pub fn expected_loss(&self, loss: &LossTable) -> f64 {
        self.0.dot(loss)
    }

    /// Largest deviation from the layer-sum and flow-conservation constraints.
    pub fn constraint_residual(&self, mdp: &LayeredMdp) -> f64 {
        let mut worst = 0.0f64;
        for h in 0..mdp.horizon() {
            let layer_sum: f64 = mdp.layer(h).map(|s| self.state_mass(s)).sum();
            worst = worst.max((layer_sum - 1.0).abs());
        }
        let mut inflow = vec![0.0; mdp.num_states()];
        for s in 0..mdp.num_states() {
            for a in 0..mdp.num_actions() {
                let q = self.get(s, a);
                let (start, row) = mdp.transition_row(s, a);
                for (k, p) in row.iter().enumerate() {
                    inflow[start + k] += q * p;
                }
            }
        }
        for (s, flow) in inflow.iter().enumerate().skip(1) {
            worst = worst.max((self.state_mass(s) - flow).abs());
        }
        worst
    }
}

/// One realized step of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub loss: f64,
}

/// State-action path of one episode, before losses are revealed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path(pub Vec<(usize, usize)>);

/// A realized episode: one step per layer, starting at the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Reveals the losses of `loss` along `path` and nothing else.
    pub fn observe(path: &Path, loss: &LossTable) -> Self {
        Self {
            steps: path
                .0
                .iter()
                .map(|&(state, action)| Step {
                    state,
                    action,
                    loss: loss.get(state, action),
                })
                .collect(),
        }
    }

    /// Visited pair at layer `h`.
    #[inline]
    pub fn pair_at(&self, h: usize) -> (usize, usize) {
        (self.steps[h].state, self.steps[h].action)
    }

    pub fn visited(&self, s: usize, a: usize) -> bool {
        self.steps.iter().any(|st| st.state == s && st.action == a)
    }

    pub fn visited_state(&self, s: usize) -> bool {
        self.steps.iter().any(|st| st.state == s)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `sum_{h' >= h} values(s_h', a_h')` for every `h`, with one trailing zero.
    pub fn suffix_sums(&self, values: impl Fn(&Step) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len() + 1];
        for h in (0..self.steps.len()).rev() {
            out[h] = out[h + 1] + values(&self.steps[h]);
        }
        out
    }
}

/// Known-transition layered episodic MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMdp {
    num_actions: usize,
    layer_offsets: Vec<usize>,
    layer_of: Vec<usize>,
    /// Concatenated rows over the next layer, one per `(s, a)`.
    transitions: Vec<f64>,
    row_offsets: Vec<usize>,
}

impl LayeredMdp {
    /// Builds an MDP from per-(s, a) rows over the next layer's states.
    ///
    /// `rows[s * A + a]` has length `layer_sizes[h + 1]` for a state in layer
    /// `h < H - 1` and is empty for last-layer states.
    pub fn new(layer_sizes: &[usize], num_actions: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut violations = Vec::new();
        if layer_sizes.is_empty() {
            violations.push("horizon: at least one layer is required".to_string());
        }
        if layer_sizes.first().copied() != Some(1) {
            violations.push("initial layer: layer 0 must contain exactly one state".to_string());
        }
        if layer_sizes.iter().any(|&w| w == 0) {
            violations.push("layer sizes: every layer needs at least one state".to_string());
        }
        if num_actions == 0 {
            violations.push("actions: A must be at least 1".to_string());
        }
        if !violations.is_empty() {
            return Err(Error::InvalidMdp(violations));
        }
        let mut layer_offsets = vec![0];
        for w in layer_sizes {
            layer_offsets.push(layer_offsets.last().unwrap() + w);
        }
        let num_states = *layer_offsets.last().unwrap();
        let mut layer_of = Vec::with_capacity(num_states);
        for (h, &w) in layer_sizes.iter().enumerate() {
            layer_of.extend(std::iter::repeat(h).take(w));
        }
        if rows.len() != num_states * num_actions {
            return Err(Error::InvalidMdp(vec![format!(
                "shape: expected {} transition rows, got {}",
                num_states * num_actions,
                rows.len()
            )]));
        }
        let horizon = layer_sizes.len();
        let mut transitions = Vec::new();
        let mut row_offsets = vec![0];
        for (idx, row) in rows.iter().enumerate() {
            let s = idx / num_actions;
            let a = idx % num_actions;
            let h = layer_of[s];
            let expected = if h + 1 < horizon { layer_sizes[h + 1] } else { 0 };
            if row.len() != expected {
                violations.push(format!(
                    "shape: row ({s},{a}) has {} entries, expected {expected}",
                    row.len()
                ));
                continue;
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                violations.push(format!("nonnegative: row ({s},{a}) has a negative entry"));
            }
            if expected > 0 {
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    violations.push(format!("row sum: row ({s},{a}) sums to {total}"));
                }
            }
            transitions.extend_from_slice(row);
            row_offsets.push(transitions.len());
        }
        if !violations.is_empty() {
            return Err(Error::InvalidMdp(violations));
        }
        Ok(Self {
            num_actions,
            layer_offsets,
            layer_of,
            transitions,
            row_offsets,
        })
    }

    /// Every `(s, a)` moves uniformly at random to the next layer.
    pub fn uniform(layer_sizes: &[usize], num_actions: usize) -> Result<Self> {
        let rows = Self::rows_from(layer_sizes, num_actions, |_, _, w| vec![1.0 / w as f64; w]);
        Self::new(layer_sizes, num_actions, rows)
    }

    /// Random kernel with flat-Dirichlet rows (full support on the next layer).
    pub fn random<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        num_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let rows = Self::rows_from(layer_sizes, num_actions, |_, _, w| {
            let mut row: Vec<f64> = (0..w).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
            // Pin the sum to 1 up to the last ulp.
            let head: f64 = row[..w - 1].iter().sum();
            row[w - 1] = (1.0 - head).max(0.0);
            row
        });
        Self::new(layer_sizes, num_actions, rows)
    }

    fn rows_from(
        layer_sizes: &[usize],
        num_actions: usize,
        mut make: impl FnMut(usize, usize, usize) -> Vec<f64>,
    ) -> Vec<Vec<f64>> {
        let mut rows = Vec::new();
        let mut s = 0;
        for (h, &w) in layer_sizes.iter().enumerate() {
            for _ in 0..w {
                for a in 0..num_actions {
                    match layer_sizes.get(h + 1) {
                        Some(&next) => rows.push(make(s, a, next)),
                        None => rows.push(Vec::new()),
                    }
                }
                s += 1;
            }
        }
        rows
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.layer_offsets.len() - 1
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.layer_of.len()
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions
    }

    #[inline]
    pub fn layer_of(&self, s: usize) -> usize {
        self.layer_of[s]
    }

    #[inline]
    pub fn layer(&self, h: usize) -> Range<usize> {
        self.layer_offsets[h]..self.layer_offsets[h + 1]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layer_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Returns the first state index of the next layer and the row over it.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> (usize, &[f64]) {
        let idx = s * self.num_actions + a;
        let row = &self.transitions[self.row_offsets[idx]..self.row_offsets[idx + 1]];
        let h = self.layer_of[s];
        let start = self.layer_offsets.get(h + 1).copied().unwrap_or(0);
        (start, row)
    }

    /// `P(next | s, a)`; zero outside the next layer.
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        let (start, row) = self.transition_row(s, a);
        if next >= start && next < start + row.len() {
            row[next - start]
        } else {
            0.0
        }
    }

    /// `max(2, S, A)`, the smallest admissible number of episodes.
    pub fn min_episodes(&self) -> usize {
        2.max(self.num_states()).max(self.num_actions)
    }

    pub fn zeros(&self) -> SaTable {
        SaTable::zeros(self.num_states(), self.num_actions)
    }

    pub fn filled(&self, v: f64) -> SaTable {
        SaTable::filled(self.num_states(), self.num_actions, v)
    }

    /// Entries of `table` restricted to layer `h`.
    pub fn layer_values<'a>(&self, table: &'a SaTable, h: usize) -> &'a [f64] {
        let r = self.layer(h);
        &table.values()[r.start * self.num_actions..r.end * self.num_actions]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_bookkeeping() {
        let mdp = LayeredMdp::uniform(&[1, 2, 3], 2).unwrap();
        assert_eq!(mdp.horizon(), 3);
        assert_eq!(mdp.num_states(), 6);
        assert_eq!(mdp.layer(1), 1..3);
        assert_eq!(mdp.layer_of(5), 2);
        let (start, row) = mdp.transition_row(1, 1);
        assert_eq!(start, 3);
        assert_eq!(row.len(), 3);
        assert_eq!(mdp.prob(1, 0, 4), 1.0 / 3.0);
        assert_eq!(mdp.prob(1, 0, 1), 0.0);
        assert!(mdp.transition_row(4, 0).1.is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let err = LayeredMdp::new(&[1, 1], 1, vec![vec![0.9], vec![]]).unwrap_err();
        assert!(err.to_string().contains("row sum"));
        let err = LayeredMdp::new(&[2], 1, vec![vec![], vec![]]).unwrap_err();
        assert!(err.to_string().contains("initial layer"));
    }

    #[test]
    fn suffix_sums_of_trajectory() {
        let traj = Trajectory {
            steps: vec![
                Step { state: 0, action: 0, loss: 0.5 },
                Step { state: 1, action: 1, loss: 1.0 },
                Step { state: 2, action: 0, loss: 0.25 },
            ],
        };
        assert_eq!(traj.suffix_sums(|st| st.loss), vec![1.75, 1.25, 0.25, 0.0]);
    }
}
