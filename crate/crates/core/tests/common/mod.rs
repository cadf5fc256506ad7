//! Brute-force oracles shared by the integration tests.
//!
//! Everything here enumerates explicitly and avoids the library's DP code.

#![allow(dead_code)]

use bobw::mdp::{LayeredMdp, LossTable, Policy, SaTable};
use rand::Rng;

/// Every state-action path from `(start state, layer)` with its probability.
pub fn paths_from(mdp: &LayeredMdp, policy: &Policy, start: usize) -> Vec<(f64, Vec<(usize, usize)>)> {
    let mut out = Vec::new();
    let mut stack = vec![(1.0, start, Vec::new())];
    while let Some((p, s, prefix)) = stack.pop() {
        for a in 0..mdp.num_actions() {
            let pa = p * policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            let mut path: Vec<(usize, usize)> = prefix.clone();
            path.push((s, a));
            if mdp.layer_of(s) + 1 == mdp.horizon() {
                out.push((pa, path));
                continue;
            }
            let (first, row) = mdp.transition_row(s, a);
            for (k, &pn) in row.iter().enumerate() {
                if pn > 0.0 {
                    stack.push((pa * pn, first + k, path.clone()));
                }
            }
        }
    }
    out
}

/// Paths starting with the fixed pair `(s, a)`, continued under `policy`.
pub fn paths_from_pair(
    mdp: &LayeredMdp,
    policy: &Policy,
    s: usize,
    a: usize,
) -> Vec<(f64, Vec<(usize, usize)>)> {
    let mut forced = policy.table().clone();
    let row = forced.row_mut(s);
    row.fill(0.0);
    row[a] = 1.0;
    paths_from(mdp, &Policy::from_table(forced), s)
}

pub fn path_loss(path: &[(usize, usize)], loss: &LossTable) -> f64 {
    path.iter().map(|&(s, a)| loss.get(s, a)).sum()
}

/// `V(s)` by summing over enumerated paths.
pub fn value_by_paths(mdp: &LayeredMdp, policy: &Policy, loss: &LossTable, s: usize) -> f64 {
    paths_from(mdp, policy, s)
        .iter()
        .map(|(p, path)| p * path_loss(path, loss))
        .sum()
}

/// `Q(s, a)` by summing over enumerated paths.
pub fn q_by_paths(mdp: &LayeredMdp, policy: &Policy, loss: &LossTable, s: usize, a: usize) -> f64 {
    paths_from_pair(mdp, policy, s, a)
        .iter()
        .map(|(p, path)| p * path_loss(path, loss))
        .sum()
}

/// Visitation probability of every pair, from initial-state paths.
pub fn occupancy_by_paths(mdp: &LayeredMdp, policy: &Policy) -> SaTable {
    let mut q = mdp.zeros();
    for (p, path) in paths_from(mdp, policy, 0) {
        for (s, a) in path {
            *q.get_mut(s, a) += p;
        }
    }
    q
}

/// Visitation probability given that `(s, a)` was played.
pub fn conditional_by_paths(mdp: &LayeredMdp, policy: &Policy, s: usize, a: usize) -> SaTable {
    let mut q = mdp.zeros();
    for (p, path) in paths_from_pair(mdp, policy, s, a) {
        for (x, y) in path {
            *q.get_mut(x, y) += p;
        }
    }
    q
}

/// Every deterministic policy, as action vectors.
pub fn all_deterministic(num_states: usize, num_actions: usize) -> Vec<Vec<usize>> {
    let total = num_actions.pow(num_states as u32);
    (0..total)
        .map(|mut code| {
            (0..num_states)
                .map(|_| {
                    let a = code % num_actions;
                    code /= num_actions;
                    a
                })
                .collect()
        })
        .collect()
}

/// Minimum expected loss over all deterministic policies, by path enumeration.
pub fn brute_best_value(mdp: &LayeredMdp, loss: &LossTable) -> f64 {
    all_deterministic(mdp.num_states(), mdp.num_actions())
        .iter()
        .map(|acts| value_by_paths(mdp, &Policy::deterministic(acts, mdp.num_actions()), loss, 0))
        .fold(f64::INFINITY, f64::min)
}

/// Random MDP whose transition rows have some exact zeros.
pub fn sparse_random_mdp<R: Rng>(layer_sizes: &[usize], num_actions: usize, rng: &mut R) -> LayeredMdp {
    let mut rows = Vec::new();
    for h in 0..layer_sizes.len() {
        let next = layer_sizes.get(h + 1).copied().unwrap_or(0);
        for _ in 0..layer_sizes[h] * num_actions {
            if next == 0 {
                rows.push(Vec::new());
                continue;
            }
            let keep = rng.gen_range(0..next);
            let mut row: Vec<f64> = (0..next)
                .map(|k| if k == keep || rng.gen_bool(0.5) { rng.gen::<f64>() + 0.05 } else { 0.0 })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            rows.push(row);
        }
    }
    LayeredMdp::new(layer_sizes, num_actions, rows).expect("valid random MDP")
}

pub fn random_loss<R: Rng>(mdp: &LayeredMdp, rng: &mut R) -> LossTable {
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |_, _| rng.gen())
}

/// Number of deterministic policies.
pub fn policy_count(mdp: &LayeredMdp) -> usize {
    mdp.num_actions().pow(mdp.num_states() as u32)
}

/// Sample mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.max(1e-12).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// `min_c sum_t ||v_t - c||_inf^2` over `c` in `[0,1]^d` by repeated grid zooming.
pub fn grid_min_sup_squared(vectors: &[Vec<f64>]) -> f64 {
    let dim = vectors[0].len();
    let f = |c: &[f64]| -> f64 {
        vectors
            .iter()
            .map(|v| {
                let dev = v.iter().zip(c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                dev * dev
            })
            .sum()
    };
    let points: usize = match dim {
        1 => 2001,
        2 => 201,
        _ => 41,
    };
    let (mut lo, mut hi) = (vec![0.0; dim], vec![1.0; dim]);
    let mut best = f64::INFINITY;
    let mut best_c = vec![0.5; dim];
    for _ in 0..12 {
        let total = points.pow(dim as u32);
        for code in 0..total {
            let mut k = code;
            let c: Vec<f64> = (0..dim)
                .map(|i| {
                    let j = k % points;
                    k /= points;
                    lo[i] + (hi[i] - lo[i]) * j as f64 / (points - 1) as f64
                })
                .collect();
            let v = f(&c);
            if v < best {
                best = v;
                best_c = c;
            }
        }
        for i in 0..dim {
            let cell = (hi[i] - lo[i]) / (points - 1) as f64;
            lo[i] = (best_c[i] - 4.0 * cell).max(0.0);
            hi[i] = (best_c[i] + 4.0 * cell).min(1.0);
        }
    }
    best
}

/// Sum of `V(s)` over every state; minimized only by policies optimal at all states,
/// including those the initial state never reaches.
pub fn all_state_value(mdp: &LayeredMdp, policy: &Policy, loss: &LossTable) -> f64 {
    (0..mdp.num_states()).map(|s| value_by_paths(mdp, policy, loss, s)).sum()
}
