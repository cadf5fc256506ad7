//! Regularized linear minimization over the simplex and the occupancy polytope.
//!
//! The simplex problem `min <p, L> + sum_a (1/eta_a) ln(1/p_a)` is solved
//! through its one-dimensional dual: stationarity gives
//! `p_a = (1/eta_a) / (L_a + lambda)` and `lambda` is the unique root of
//! `sum_a p_a(lambda) = 1` to the right of `-min_a L_a`.
//!
//! The polytope problem is solved in the primal by an equality-constrained
//! damped Newton method. The constraints are one row per state: the layer-0
//! mass equals one and every other state's outgoing mass equals its inflow.
//! Each Newton step reduces the KKT system to the `S x S` normal equations
//! `E D^{-1} E^T nu = rhs`, which are solved by a Jacobi-scaled Cholesky
//! factorization with one round of iterative refinement.

use crate::error::{Error, Result};
use crate::mdp::{occupancy, LayeredMdp, LossTable, OccupancyMeasure, Policy, SaTable};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const SIMPLEX_MAX_ITERS: usize = 10_000;
pub const NEWTON_MAX_ITERS: usize = 200;
pub const MAX_DAMPING_RETRIES: usize = 20;
/// No coordinate may drop below this fraction of its current value in one step.
pub const BOUNDARY_FRACTION: f64 = 0.01;
pub const FEASIBILITY_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
pub struct SimplexProblem<'a> {
    pub losses: &'a [f64],
    pub etas: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub probs: Vec<f64>,
    /// Multiplier of the sum-to-one constraint, in the caller's loss scale.
    pub lambda: f64,
    pub iterations: usize,
    /// `max_a |L_a + lambda - 1/(eta_a p_a)|`.
    pub kkt_residual: f64,
}

/// Minimizes `<p, L> + sum_a (1/eta_a) ln(1/p_a)` over the probability simplex.
pub fn solve_simplex(problem: &SimplexProblem<'_>, tol: f64) -> Result<SimplexSolution> {
    let SimplexProblem { losses, etas } = *problem;
    if losses.len() != etas.len() || losses.is_empty() {
        return Err(Error::InvalidParameter(
            "simplex problem needs equal, nonzero lengths".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if losses.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("simplex losses"));
    }
    if etas.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::NonFinite("simplex learning rates"));
    }
    let n = losses.len();
    if n == 1 {
        return Ok(SimplexSolution {
            probs: vec![1.0],
            lambda: 1.0 / etas[0] - losses[0],
            iterations: 0,
            kkt_residual: 0.0,
        });
    }

    // Shift so that min L = 0; the root then lies in [w_min_arg, sum w].
    let (arg_min, l_min) = losses
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(i, m), (j, x)| if x < m { (j, x) } else { (i, m) });
    let shifted: Vec<f64> = losses.iter().map(|&x| x - l_min).collect();
    let weights: Vec<f64> = etas.iter().map(|&e| 1.0 / e).collect();

    let mass = |lambda: f64| -> (f64, f64) {
        let mut total = 0.0;
        let mut slope = 0.0;
        for (&l, &w) in shifted.iter().zip(&weights) {
            let d = l + lambda;
            total += w / d;
            slope += w / (d * d);
        }
        (total - 1.0, slope)
    };

    let mut lo = weights[arg_min];
    let mut hi: f64 = weights.iter().sum();
    let mut lambda = lo;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > SIMPLEX_MAX_ITERS {
            return Err(Error::NoConvergence {
                iterations: SIMPLEX_MAX_ITERS,
                residual: mass(lambda).0.abs(),
            });
        }
        let (f, slope) = mass(lambda);
        if f >= 0.0 {
            lo = lo.max(lambda);
        } else {
            hi = hi.min(lambda);
        }
        let mut next = lambda + f / slope;
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - lambda).abs();
        lambda = next;
        if f.abs() <= 0.1 * tol || step <= 4.0 * f64::EPSILON * lambda.abs() {
            break;
        }
    }

    let mut probs: Vec<f64> = shifted
        .iter()
        .zip(&weights)
        .map(|(&l, &w)| w / (l + lambda))
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    let kkt_residual = shifted
        .iter()
        .zip(&weights)
        .zip(&probs)
        .map(|((&l, &w), &p)| (l + lambda - w / p).abs())
        .fold(0.0, f64::max);
    Ok(SimplexSolution {
        probs,
        lambda: lambda - l_min,
        iterations,
        kkt_residual,
    })
}

/// Objective regularizer over the occupancy polytope.
#[derive(Debug, Clone, Copy)]
pub enum Regularizer<'a> {
    /// `sum_i w_i ln(1/q_i)` with per-pair weights `w = 1/eta`.
    LogBarrier { weights: &'a SaTable },
    /// `(1/eta) sum_i q_i ln q_i`.
    NegEntropy { inv_eta: f64 },
}

impl Regularizer<'_> {
    /// Regularizer term contributed by pair `i` at mass `q`.
    #[inline]
    pub fn value(&self, i: usize, q: f64) -> f64 {
        match self {
            Regularizer::LogBarrier { weights } => -weights.values()[i] * q.ln(),
            Regularizer::NegEntropy { inv_eta } => inv_eta * q * q.ln(),
        }
    }

    #[inline]
    fn gradient(&self, i: usize, q: f64) -> f64 {
        match self {
            Regularizer::LogBarrier { weights } => -weights.values()[i] / q,
            Regularizer::NegEntropy { inv_eta } => inv_eta * (q.ln() + 1.0),
        }
    }

    #[inline]
    fn hessian(&self, i: usize, q: f64) -> f64 {
        match self {
            Regularizer::LogBarrier { weights } => weights.values()[i] / (q * q),
            Regularizer::NegEntropy { inv_eta } => inv_eta / q,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolytopeProblem<'a> {
    pub mdp: &'a LayeredMdp,
    pub losses: &'a LossTable,
    pub etas: &'a SaTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySolution {
    pub q: OccupancyMeasure,
    pub iterations: usize,
    /// `||grad + E^T nu||_inf / (1 + ||L||_inf)` at the returned point.
    pub stationarity: f64,
    /// Largest layer-sum / flow-conservation violation.
    pub feasibility: f64,
}

/// Minimizes `<q, L> + sum (1/eta) ln(1/q)` over the occupancy polytope.
pub fn solve_occupancy(
    problem: &PolytopeProblem<'_>,
    tol: f64,
    warm_start: Option<&OccupancyMeasure>,
) -> Result<OccupancySolution> {
    if problem.etas.values().iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::NonFinite("occupancy learning rates"));
    }
    let weights = problem.etas.map(|e| 1.0 / e);
    minimize_over_polytope(
        problem.mdp,
        problem.losses,
        Regularizer::LogBarrier { weights: &weights },
        tol,
        warm_start,
    )
}

/// Equality-constrained damped Newton over the occupancy polytope.
pub fn minimize_over_polytope(
    mdp: &LayeredMdp,
    losses: &LossTable,
    reg: Regularizer<'_>,
    tol: f64,
    warm_start: Option<&OccupancyMeasure>,
) -> Result<OccupancySolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if !losses.is_finite() {
        return Err(Error::NonFinite("occupancy losses"));
    }
    let n_states = mdp.num_states();
    let n_actions = mdp.num_actions();
    let n = mdp.num_pairs();
    let scale = 1.0 + losses.max_abs();
    let lvals = losses.values();

    let mut q: Vec<f64> = match warm_start {
        Some(w)
            if w.table().values().len() == n
                && w.table().values().iter().all(|&x| x > 0.0 && x.is_finite())
                && w.constraint_residual(mdp) <= 1e-8 =>
        {
            w.table().values().to_vec()
        }
        _ => occupancy(mdp, &Policy::uniform(n_states, n_actions))
            .into_table()
            .values()
            .to_vec(),
    };

    let mut grad = vec![0.0; n];
    let mut dinv = vec![0.0; n];
    let mut resid = vec![0.0; n_states];
    let mut rho = vec![0.0; n];
    let mut dq = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial_nu = vec![0.0; n_states];
    let mut scratch_n = vec![0.0; n];
    let mut scratch_s = vec![0.0; n_states];
    let mut normal = vec![0.0; n_states * n_states];
    let mut rhs = vec![0.0; n_states];
    let mut nu_cur: Option<Vec<f64>> = None;

    // Norm of the primal-dual residual `(grad + E^T nu, E q - b)` at `(q, nu)`.
    let kkt_norm = |q: &[f64], nu: &[f64], g_buf: &mut [f64], r_buf: &mut [f64]| -> f64 {
        apply_et(mdp, nu, g_buf);
        let mut acc = 0.0;
        for i in 0..n {
            let v = g_buf[i] + lvals[i] + reg.gradient(i, q[i]);
            acc += v * v;
        }
        constraint_residual(mdp, q, r_buf);
        acc += r_buf.iter().map(|x| x * x).sum::<f64>();
        acc.sqrt()
    };

    let mut iterations = 0;
    loop {
        for i in 0..n {
            grad[i] = lvals[i] + reg.gradient(i, q[i]);
            dinv[i] = 1.0 / reg.hessian(i, q[i]);
        }
        constraint_residual(mdp, &q, &mut resid);
        // rhs = r - E (D^{-1} grad)
        let dg: Vec<f64> = grad.iter().zip(&dinv).map(|(g, d)| g * d).collect();
        apply_e(mdp, &dg, &mut rhs);
        for (r, c) in rhs.iter_mut().zip(&resid) {
            *r = c - *r;
        }
        build_normal(mdp, &dinv, &mut normal);
        let nu = solve_spd(&normal, n_states, &rhs)?;
        apply_et(mdp, &nu, &mut rho);
        for i in 0..n {
            rho[i] += grad[i];
            dq[i] = -dinv[i] * rho[i];
        }
        let stationarity = rho.iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
        let feasibility = resid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if stationarity <= tol && feasibility <= FEASIBILITY_TOL {
            return Ok(OccupancySolution {
                q: OccupancyMeasure::from_table(SaTable::from_vec(n_actions, q)),
                iterations,
                stationarity,
                feasibility,
            });
        }
        iterations += 1;
        if iterations > NEWTON_MAX_ITERS {
            return Err(Error::NoConvergence {
                iterations: NEWTON_MAX_ITERS,
                residual: stationarity.max(feasibility),
            });
        }

        // Infeasible-start Newton: backtrack on the primal-dual residual norm.
        // The objective itself is a poor merit function here, because a tiny
        // feasibility correction can outweigh the decrease along the
        // constraint set when the gradient is large.
        let nu_prev = nu_cur.take().unwrap_or_else(|| nu.clone());
        let r0 = kkt_norm(&q, &nu_prev, &mut scratch_n, &mut scratch_s);
        let mut alpha: f64 = 1.0;
        for i in 0..n {
            if dq[i] < 0.0 {
                alpha = alpha.min((1.0 - BOUNDARY_FRACTION) * q[i] / -dq[i]);
            }
        }
        let slack = 64.0 * f64::EPSILON * (scale + grad.iter().fold(0.0f64, |m, g| m.max(g.abs())));
        let mut accepted = false;
        for _ in 0..=MAX_DAMPING_RETRIES {
            for i in 0..n {
                trial[i] = q[i] + alpha * dq[i];
            }
            if trial.iter().all(|&x| x > 0.0) {
                for j in 0..n_states {
                    trial_nu[j] = nu_prev[j] + alpha * (nu[j] - nu_prev[j]);
                }
                let r1 = kkt_norm(&trial, &trial_nu, &mut scratch_n, &mut scratch_s);
                if r1 <= (1.0 - 0.01 * alpha) * r0 + slack {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iterations,
                residual: stationarity.max(feasibility),
            });
        }
        std::mem::swap(&mut q, &mut trial);
        nu_cur = Some(trial_nu.clone());
    }
}

/// `E q - b`: layer-0 mass minus one, and outflow minus inflow elsewhere.
fn constraint_residual(mdp: &LayeredMdp, q: &[f64], out: &mut [f64]) {
    apply_e(mdp, q, out);
    out[0] -= 1.0;
}

/// `(E x)_s = sum_a x(s,a) - sum_{(s',a')} P(s | s', a') x(s',a')`.
fn apply_e(mdp: &LayeredMdp, x: &[f64], out: &mut [f64]) {
    let n_actions = mdp.num_actions();
    out.fill(0.0);
    for s in 0..mdp.num_states() {
        for a in 0..n_actions {
            let v = x[s * n_actions + a];
            out[s] += v;
            let (start, row) = mdp.transition_row(s, a);
            for (k, p) in row.iter().enumerate() {
                out[start + k] -= p * v;
            }
        }
    }
}

/// `(E^T nu)(s,a) = nu_s - sum_{s'} P(s'|s,a) nu_{s'}`.
fn apply_et(mdp: &LayeredMdp, nu: &[f64], out: &mut [f64]) {
    let n_actions = mdp.num_actions();
    for s in 0..mdp.num_states() {
        for a in 0..n_actions {
            let (start, row) = mdp.transition_row(s, a);
            let next: f64 = row.iter().zip(&nu[start..]).map(|(p, v)| p * v).sum();
            out[s * n_actions + a] = nu[s] - next;
        }
    }
}

/// `E diag(d) E^T`, accumulated column by column.
fn build_normal(mdp: &LayeredMdp, d: &[f64], out: &mut [f64]) {
    let n_states = mdp.num_states();
    let n_actions = mdp.num_actions();
    out.fill(0.0);
    for s in 0..n_states {
        for a in 0..n_actions {
            let w = d[s * n_actions + a];
            let (start, row) = mdp.transition_row(s, a);
            out[s * n_states + s] += w;
            for (k, p) in row.iter().enumerate() {
                let t = start + k;
                let c = -p * w;
                out[s * n_states + t] += c;
                out[t * n_states + s] += c;
                for (k2, p2) in row.iter().enumerate() {
                    out[t * n_states + start + k2] += p * p2 * w;
                }
            }
        }
    }
}

/// Solves the SPD system `m x = b` by Jacobi-scaled Cholesky plus one refinement step.
fn solve_spd(m: &[f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / m[i * n + i].sqrt()).collect();
    if scale.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("normal-equation diagonal"));
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            l[i * n + j] = m[i * n + j] * scale[i] * scale[j];
        }
    }
    if !cholesky_in_place(&mut l, n) {
        // Rank-deficient up to rounding: retry with a tiny ridge.
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = m[i * n + j] * scale[i] * scale[j];
            }
            l[i * n + i] += 1e-13;
        }
        if !cholesky_in_place(&mut l, n) {
            return Err(Error::Invariant("normal equations are not positive definite".into()));
        }
    }
    let solve_scaled = |rhs: &[f64]| -> Vec<f64> {
        let mut y: Vec<f64> = rhs.iter().zip(&scale).map(|(r, s)| r * s).collect();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc -= l[i * n + k] * y[k];
            }
            y[i] = acc / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= l[k * n + i] * y[k];
            }
            y[i] = acc / l[i * n + i];
        }
        y.iter().zip(&scale).map(|(v, s)| v * s).collect()
    };
    let mut x = solve_scaled(b);
    let residual: Vec<f64> = (0..n)
        .map(|i| b[i] - (0..n).map(|j| m[i * n + j] * x[j]).sum::<f64>())
        .collect();
    let correction = solve_scaled(&residual);
    for (xi, ci) in x.iter_mut().zip(&correction) {
        *xi += ci;
    }
    Ok(x)
}

fn cholesky_in_place(l: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = l[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let root = diag.sqrt();
        l[j * n + j] = root;
        for i in j + 1..n {
            let mut v = l[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / root;
        }
    }
    true
}
