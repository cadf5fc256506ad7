//! Dynamic-programming primitives over a layered MDP.

use rand::Rng;

use super::{LayeredMdp, LossTable, OccupancyMeasure, Path, Policy, SaTable};

/// Rows whose total mass is below this are treated as unreachable.
const ZERO_ROW_MASS: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunctions {
    /// `V(s)`, one entry per non-terminal state.
    pub v: Vec<f64>,
    pub q: SaTable,
}

impl ValueFunctions {
    /// `V(s_0)`.
    pub fn initial_value(&self) -> f64 {
        self.v[0]
    }
}

/// `sum_{s'} P(s'|s,a) v(s')` over the next layer.
#[inline]
pub(crate) fn expected_next(mdp: &LayeredMdp, s: usize, a: usize, v: &[f64]) -> f64 {
    let (start, row) = mdp.transition_row(s, a);
    row.iter().zip(&v[start..]).map(|(p, x)| p * x).sum()
}

/// Backward DP for `Q^pi(s,a; loss)` and `V^pi(s; loss)` with `V(terminal) = 0`.
pub fn value_functions(mdp: &LayeredMdp, policy: &Policy, loss: &LossTable) -> ValueFunctions {
    let n_actions = mdp.num_actions();
    let mut v = vec![0.0; mdp.num_states()];
    let mut q = mdp.zeros();
    for h in (0..mdp.horizon()).rev() {
        for s in mdp.layer(h) {
            let mut vs = 0.0;
            for a in 0..n_actions {
                let qa = loss.get(s, a) + expected_next(mdp, s, a, &v);
                q.set(s, a, qa);
                vs += policy.prob(s, a) * qa;
            }
            v[s] = vs;
        }
    }
    ValueFunctions { v, q }
}

/// Forward DP seeded with the entries of `q` on layer `from_layer`.
fn forward_from(mdp: &LayeredMdp, policy: &Policy, mut q: SaTable, from_layer: usize) -> SaTable {
    let mut mass = vec![0.0; mdp.num_states()];
    for h in from_layer..mdp.horizon() {
        if h > from_layer {
            for s in mdp.layer(h) {
                for a in 0..mdp.num_actions() {
                    q.set(s, a, policy.prob(s, a) * mass[s]);
                }
            }
        }
        for s in mdp.layer(h) {
            for a in 0..mdp.num_actions() {
                let qsa = q.get(s, a);
                if qsa == 0.0 {
                    continue;
                }
                let (start, row) = mdp.transition_row(s, a);
                for (k, p) in row.iter().enumerate() {
                    mass[start + k] += qsa * p;
                }
            }
        }
    }
    q
}

/// Occupancy measure `q^pi(s, a)` by forward DP.
pub fn occupancy(mdp: &LayeredMdp, policy: &Policy) -> OccupancyMeasure {
    let mut q = mdp.zeros();
    for a in 0..mdp.num_actions() {
        q.set(0, a, policy.prob(0, a));
    }
    OccupancyMeasure(forward_from(mdp, policy, q, 0))
}

/// Conditional occupancy `q^pi(s', a' | s, a)`.
///
/// Zero on earlier layers and on same-layer pairs other than `(s, a)`, one at
/// `(s, a)`, and the forward DP from the point mass at `(s, a)` afterwards.
pub fn conditional_occupancy(mdp: &LayeredMdp, policy: &Policy, s: usize, a: usize) -> SaTable {
    let mut q = mdp.zeros();
    q.set(s, a, 1.0);
    forward_from(mdp, policy, q, mdp.layer_of(s))
}

/// `pi(a|s) = q(s,a) / sum_b q(s,b)`, uniform on rows with (numerically) zero mass.
pub fn policy_from_occupancy(q: &OccupancyMeasure) -> Policy {
    let table = q.table();
    let n_actions = table.num_actions();
    let mut out = SaTable::zeros(table.num_states(), n_actions);
    for s in 0..table.num_states() {
        let row = table.row(s);
        let total: f64 = row.iter().sum();
        let dst = out.row_mut(s);
        if total < ZERO_ROW_MASS {
            dst.fill(1.0 / n_actions as f64);
        } else {
            for (d, &x) in dst.iter_mut().zip(row) {
                *d = x / total;
            }
        }
    }
    Policy(out)
}

/// Draws an index from the probability vector `probs` by inverse CDF.
#[inline]
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left `u` above the accumulated mass.
    last_positive
}

/// Samples the state-action path of one episode under `policy`.
pub fn sample_trajectory<R: Rng + ?Sized>(mdp: &LayeredMdp, policy: &Policy, rng: &mut R) -> Path {
    let mut pairs = Vec::with_capacity(mdp.horizon());
    let mut s = 0;
    for h in 0..mdp.horizon() {
        let a = sample_index(policy.row(s), rng);
        pairs.push((s, a));
        if h + 1 < mdp.horizon() {
            let (start, row) = mdp.transition_row(s, a);
            s = start + sample_index(row, rng);
        }
    }
    Path(pairs)
}

/// Backward-DP optimal deterministic policy for `loss` and its value `V(s_0)`.
///
/// Ties go to the smallest action index.
pub fn best_deterministic_policy(mdp: &LayeredMdp, loss: &LossTable) -> (Policy, f64) {
    let (actions, v) = greedy_backward(mdp, loss, |cand, best| cand < best);
    (Policy::deterministic(&actions, mdp.num_actions()), v[0])
}

/// Backward DP choosing at each state the action preferred by `better`.
pub(crate) fn greedy_backward(
    mdp: &LayeredMdp,
    reward: &LossTable,
    better: impl Fn(f64, f64) -> bool,
) -> (Vec<usize>, Vec<f64>) {
    let mut v = vec![0.0; mdp.num_states()];
    let mut actions = vec![0; mdp.num_states()];
    for h in (0..mdp.horizon()).rev() {
        for s in mdp.layer(h) {
            let mut best_a = 0;
            let mut best = reward.get(s, 0) + expected_next(mdp, s, 0, &v);
            for a in 1..mdp.num_actions() {
                let qa = reward.get(s, a) + expected_next(mdp, s, a, &v);
                if better(qa, best) {
                    best = qa;
                    best_a = a;
                }
            }
            v[s] = best;
            actions[s] = best_a;
        }
    }
    (actions, v)
}

/// `Delta(s,a) = Q^{pi*}(s,a; mu) - min_a' Q^{pi*}(s,a'; mu)` for the mu-optimal `pi*`.
pub fn suboptimality_gaps(mdp: &LayeredMdp, mu: &LossTable) -> SaTable {
    let (pi_star, _) = best_deterministic_policy(mdp, mu);
    let q = value_functions(mdp, &pi_star, mu).q;
    let mut gaps = mdp.zeros();
    for s in 0..mdp.num_states() {
        let row = q.row(s);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (a, &qa) in row.iter().enumerate() {
            gaps.set(s, a, (qa - min).max(0.0));
        }
    }
    gaps
}
