//! Data-dependent complexity measures of a loss sequence and of a stochastic
//! loss law: best-in-hindsight loss, second-order distance to a fixed
//! baseline, path length, and occupancy-weighted variances.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::env::corruption_increment;
use crate::mdp::{
    best_deterministic_policy, greedy_backward, suboptimality_gaps, LayeredMdp, LossTable,
    SaTable,
};

pub const SUBGRADIENT_ITERS: usize = 10_000;

/// `min_pi sum_t V^pi(s_0; ell_t)`, i.e. the best policy for the summed loss.
pub fn first_order(mdp: &LayeredMdp, losses: &[LossTable]) -> f64 {
    let mut total = mdp.zeros();
    for l in losses {
        total.add_assign(l);
    }
    best_deterministic_policy(mdp, &total).1
}

/// `sum_t ||ell_{t+1} - ell_t||_1`.
pub fn path_length(losses: &[LossTable]) -> f64 {
    losses
        .windows(2)
        .map(|w| {
            w[0].values()
                .iter()
                .zip(w[1].values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum()
}

/// `max_pi <q^pi, sigma^2>`.
pub fn occupancy_weighted_variance(mdp: &LayeredMdp, sigma_sq: &LossTable) -> f64 {
    greedy_backward(mdp, sigma_sq, |cand, best| cand > best).1[0]
}

/// `max_{a, pi} sum q^pi(s', a' | s, a) sigma^2(s', a')` for every state `s`.
pub fn conditional_variance(mdp: &LayeredMdp, sigma_sq: &LossTable) -> Vec<f64> {
    greedy_backward(mdp, sigma_sq, |cand, best| cand > best).1
}

/// Distinct loss vectors of one layer with their multiplicities.
#[derive(Debug, Clone, Default)]
pub struct LayerSamples {
    index: HashMap<Vec<u64>, usize>,
    vectors: Vec<Vec<f64>>,
    counts: Vec<f64>,
}

impl LayerSamples {
    pub fn push(&mut self, values: &[f64]) {
        let key: Vec<u64> = values.iter().map(|x| x.to_bits()).collect();
        match self.index.get(&key) {
            Some(&i) => self.counts[i] += 1.0,
            None => {
                self.index.insert(key, self.vectors.len());
                self.vectors.push(values.to_vec());
                self.counts.push(1.0);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `sum_t max_i |ell_t(i) - c(i)|^2` and a subgradient in `grad`.
    fn objective(&self, c: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut total = 0.0;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        for (v, &n) in self.vectors.iter().zip(&self.counts) {
            let (mut arg, mut dev) = (0, 0.0);
            for (i, (x, ci)) in v.iter().zip(c).enumerate() {
                let d = (ci - x).abs();
                if d > dev {
                    dev = d;
                    arg = i;
                }
            }
            total += n * dev * dev;
            if let Some(g) = grad.as_deref_mut() {
                g[arg] += 2.0 * n * (c[arg] - v[arg]);
            }
        }
        total
    }

    /// Subgradient descent from the coordinatewise midrange.
    ///
    /// Returns `(best value found, value at the midrange)`.
    pub fn minimize(&self, iterations: usize) -> (f64, f64) {
        if self.is_empty() {
            return (0.0, 0.0);
        }
        let dim = self.vectors[0].len();
        let mut c: Vec<f64> = (0..dim)
            .map(|i| {
                let (lo, hi) = self
                    .vectors
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v[i]), hi.max(v[i]))
                    });
                0.5 * (lo + hi)
            })
            .collect();
        let mut grad = vec![0.0; dim];
        let upper = self.objective(&c, None);
        let mut best = upper;
        for k in 1..=iterations {
            let value = self.objective(&c, Some(&mut grad));
            best = best.min(value);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let step = 1.0 / (k as f64).sqrt() / norm;
            for (ci, gi) in c.iter_mut().zip(&grad) {
                *ci = (*ci - step * gi).clamp(0.0, 1.0);
            }
        }
        best = best.min(self.objective(&c, None));
        (best, upper)
    }
}

/// `(optimized, midrange upper bound)` of `min_c sum_t sum_h ||ell_t(h) - c(h)||_inf^2`.
pub fn second_order(mdp: &LayeredMdp, losses: &[LossTable]) -> (f64, f64) {
    let mut acc = MeasureAccumulator::new(mdp);
    for l in losses {
        acc.push(l, l);
    }
    acc.second_order(SUBGRADIENT_ITERS)
}

/// Streaming collection of everything a report needs from a run.
#[derive(Debug, Clone)]
pub struct MeasureAccumulator {
    mdp: LayeredMdp,
    total: SaTable,
    previous: Option<LossTable>,
    path_length: f64,
    corruption: f64,
    episodes: usize,
    layers: Vec<LayerSamples>,
}

impl MeasureAccumulator {
    pub fn new(mdp: &LayeredMdp) -> Self {
        Self {
            total: mdp.zeros(),
            previous: None,
            path_length: 0.0,
            corruption: 0.0,
            episodes: 0,
            layers: vec![LayerSamples::default(); mdp.horizon()],
            mdp: mdp.clone(),
        }
    }

    pub fn push(&mut self, ell: &LossTable, clean: &LossTable) {
        self.total.add_assign(ell);
        if let Some(prev) = &self.previous {
            self.path_length += path_length(&[prev.clone(), ell.clone()]);
        }
        self.corruption += corruption_increment(&self.mdp, ell, clean);
        for (h, layer) in self.layers.iter_mut().enumerate() {
            layer.push(self.mdp.layer_values(ell, h));
        }
        self.previous = Some(ell.clone());
        self.episodes += 1;
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn total_loss(&self) -> &SaTable {
        &self.total
    }

    pub fn second_order(&self, iterations: usize) -> (f64, f64) {
        self.layers
            .iter()
            .map(|l| l.minimize(iterations))
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y))
    }

    /// Builds the report; pass the clean mean and variance for stochastic processes.
    pub fn report(&self, moments: Option<(&LossTable, &LossTable)>) -> MeasureReport {
        let (q_inf, q_inf_upper) = self.second_order(SUBGRADIENT_ITERS);
        let (v_occ, v_cond, gaps) = match moments {
            Some((mu, var)) => {
                let gaps = suboptimality_gaps(&self.mdp, mu);
                (
                    Some(occupancy_weighted_variance(&self.mdp, var)),
                    Some(conditional_variance(&self.mdp, var)),
                    Some(table_rows(&gaps)),
                )
            }
            None => (None, None, None),
        };
        MeasureReport {
            episodes: self.episodes,
            l_star: best_deterministic_policy(&self.mdp, &self.total).1,
            q_inf,
            q_inf_upper,
            v1: self.path_length,
            v_occ,
            v_cond,
            gaps,
            c_realized: self.corruption,
        }
    }
}

fn table_rows(t: &SaTable) -> Vec<Vec<f64>> {
    (0..t.num_states()).map(|s| t.row(s).to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub episodes: usize,
    pub l_star: f64,
    pub q_inf: f64,
    pub q_inf_upper: f64,
    pub v1: f64,
    /// Only for stochastic or corrupted processes.
    pub v_occ: Option<f64>,
    pub v_cond: Option<Vec<f64>>,
    pub gaps: Option<Vec<Vec<f64>>>,
    pub c_realized: f64,
}

impl MeasureReport {
    /// Range violations, empty when every field is where it must be.
    pub fn range_violations(&self, mdp: &LayeredMdp) -> Vec<String> {
        let h = mdp.horizon() as f64;
        let t = self.episodes as f64;
        let sa = (mdp.num_states() * mdp.num_actions()) as f64;
        let tol = 1e-9 * (1.0 + h * t);
        let mut out = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                out.push(what.to_string());
            }
        };
        check(self.l_star >= -tol && self.l_star <= h * t + tol, "l_star");
        check(self.q_inf >= -tol && self.q_inf <= h * t / 4.0 + tol, "q_inf");
        check(self.q_inf <= self.q_inf_upper + 1e-12, "q_inf_upper");
        check(self.v1 >= 0.0 && self.v1 <= sa * (t - 1.0).max(0.0) + tol, "v1");
        check(self.c_realized >= 0.0 && self.c_realized <= h * t + tol, "c_realized");
        if let Some(v) = self.v_occ {
            check(v >= 0.0 && v <= h / 4.0 + 1e-12, "v_occ");
        }
        if let Some(vc) = &self.v_cond {
            check(vc.iter().all(|&v| v >= 0.0 && v <= h / 4.0 + 1e-12), "v_cond");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Adversarial,
    Stochastic,
    Corrupted,
}

/// Leading terms of the regret bounds, evaluated at episode prefixes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlays {
    pub note: &'static str,
    pub regime: Regime,
    pub t: Vec<usize>,
    /// `sqrt(H S A t ln T)`.
    pub sqrt_t: Vec<f64>,
    /// `sqrt(S A ln T min{L*, H t - L*, Q_inf, V1})` with run measures scaled by `t / T`.
    pub first_order: Vec<f64>,
    /// `sqrt(S A V t ln T)`, stochastic regimes only.
    pub variance: Vec<f64>,
    /// `H S A ln T`.
    pub additive: f64,
    /// `sqrt(H S A ln T * C)` with `C` scaled by `t / T`.
    pub corruption: Vec<f64>,
}

pub fn theoretical_overlays(
    mdp: &LayeredMdp,
    horizon: usize,
    report: &MeasureReport,
    regime: Regime,
    prefixes: &[usize],
) -> Overlays {
    let h = mdp.horizon() as f64;
    let sa = (mdp.num_states() * mdp.num_actions()) as f64;
    let ln_t = (horizon as f64).ln();
    let additive = h * sa * ln_t;
    let frac = |t: usize| t as f64 / horizon as f64;
    let sqrt_t = prefixes.iter().map(|&t| (h * sa * t as f64 * ln_t).sqrt()).collect();
    let first_order = prefixes
        .iter()
        .map(|&t| {
            let l = report.l_star * frac(t);
            let m = l
                .min(h * t as f64 - l)
                .min(report.q_inf * frac(t))
                .min(report.v1 * frac(t))
                .max(0.0);
            (sa * ln_t * m).sqrt()
        })
        .collect();
    let variance = match (regime, report.v_occ) {
        (Regime::Adversarial, _) | (_, None) => Vec::new(),
        (_, Some(v)) => prefixes
            .iter()
            .map(|&t| (sa * v * t as f64 * ln_t).sqrt())
            .collect(),
    };
    let corruption = prefixes
        .iter()
        .map(|&t| (additive * report.c_realized * frac(t)).sqrt())
        .collect();
    Overlays {
        note: "leading terms up to constants",
        regime,
        t: prefixes.to_vec(),
        sqrt_t,
        first_order,
        variance,
        additive,
        corruption,
    }
}
