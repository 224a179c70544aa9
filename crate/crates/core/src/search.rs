//! Seeded multi-restart ascent for scale-invariant ratio objectives.
//!
//! Objectives such as `Σ‖x_i‖² / σ_max(M(A))` are nonsmooth where the top
//! singular value is repeated. The engine ascends a smoothed surrogate in which
//! `σ_max` is replaced by a Schatten-`p` norm, raising `p` in stages, while the
//! best point is tracked with the exact objective. Only exact values are ever
//! reported, so every returned value is attained by the returned point.

use rayon::prelude::*;

use crate::linalg::{hs_norm, re_inner, Matrix};

/// Smoothing exponents, applied in order.
pub const SMOOTHING_STAGES: [f64; 5] = [4.0, 16.0, 64.0, 256.0, 1024.0];
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const STALL_WINDOW: usize = 50;
const STALL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Log of the smoothed objective.
    pub surrogate: f64,
    /// Log of the exact objective.
    pub exact: f64,
    /// Real gradient of `surrogate`: `f(A + tD) ≈ f(A) + t Re tr(G† D)`.
    pub grad: Matrix,
}

/// A scale-invariant objective over complex matrices of a fixed shape.
pub trait RatioProblem: Sync {
    fn evaluate(&self, a: &Matrix, p: f64) -> Evaluation;

    fn exact(&self, a: &Matrix) -> f64 {
        self.evaluate(a, SMOOTHING_STAGES[0]).exact
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AscentBudget {
    pub iterations: usize,
    pub initial_step: f64,
}

#[derive(Debug, Clone)]
pub struct AscentOutcome {
    pub point: Matrix,
    /// Exact log-objective at `point`.
    pub log_value: f64,
    pub start_index: usize,
}

/// Runs one ascent per start in parallel; the winner is the highest exact
/// value, ties going to the lowest start index.
pub fn maximize<P: RatioProblem>(problem: &P, starts: &[Matrix], budget: AscentBudget) -> AscentOutcome {
    assert!(!starts.is_empty(), "ascent needs at least one start");
    let results: Vec<(f64, Matrix)> = starts
        .par_iter()
        .map(|s| ascend(problem, s.clone(), budget))
        .collect();
    let (idx, (val, point)) = results
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (f64, Matrix))>, |acc, (i, cur)| match acc {
            Some(a) if !(cur.0 > a.1 .0) => Some(a),
            _ => Some((i, cur)),
        })
        .expect("nonempty");
    AscentOutcome { point, log_value: val, start_index: idx }
}

fn normalize(a: Matrix) -> Matrix {
    let n = hs_norm(&a);
    if n > 0.0 {
        a.unscale(n)
    } else {
        a
    }
}

/// Single-start staged ascent. Returns the best exact log value seen and its point.
pub fn ascend<P: RatioProblem>(problem: &P, start: Matrix, budget: AscentBudget) -> (f64, Matrix) {
    let mut a = normalize(start);
    let first = problem.evaluate(&a, SMOOTHING_STAGES[0]);
    let mut best = (sanitize(first.exact), a.clone());
    let per_stage = (budget.iterations / SMOOTHING_STAGES.len()).max(1);
    for &p in &SMOOTHING_STAGES {
        let mut cur = problem.evaluate(&a, p);
        let mut step = budget.initial_step;
        let mut history = Vec::with_capacity(per_stage);
        for it in 0..per_stage {
            let gnorm = hs_norm(&cur.grad);
            if !(gnorm > 0.0) || !cur.surrogate.is_finite() {
                break;
            }
            let dir = cur.grad.unscale(gnorm);
            let mut accepted = None;
            let mut t = step;
            while t >= MIN_STEP {
                let cand = normalize(&a + dir.scale(t));
                let ev = problem.evaluate(&cand, p);
                if ev.surrogate.is_finite() && ev.surrogate >= cur.surrogate + ARMIJO * t * gnorm {
                    accepted = Some((cand, ev, t));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, ev, t)) = accepted else { break };
            a = cand;
            cur = ev;
            step = (2.0 * t).min(0.5);
            let exact = sanitize(cur.exact);
            if exact > best.0 {
                best = (exact, a.clone());
            }
            history.push(cur.surrogate);
            if it >= STALL_WINDOW && cur.surrogate - history[it - STALL_WINDOW] < STALL_TOL {
                break;
            }
        }
    }
    best
}

fn sanitize(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x
    }
}

/// Weights `(s_j / ‖s‖_p)^{p-1}` of the Schatten-`p` gradient and the norm itself.
/// `values` must be nonnegative and sorted in decreasing order.
pub fn schatten_weights(values: &[f64], p: f64) -> (f64, Vec<f64>) {
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return (0.0, vec![0.0; values.len()]);
    }
    let sum: f64 = values.iter().map(|&s| (s / top).powf(p)).sum();
    let norm = top * sum.powf(1.0 / p);
    let weights = values.iter().map(|&s| (s / norm).powf(p - 1.0)).collect();
    (norm, weights)
}

/// Directional finite-difference check used by tests of gradient formulas.
pub fn directional_derivative<F: Fn(&Matrix) -> f64>(f: F, a: &Matrix, d: &Matrix, h: f64) -> f64 {
    (f(&(a + d.scale(h))) - f(&(a - d.scale(h)))) / (2.0 * h)
}

pub fn gradient_pairing(g: &Matrix, d: &Matrix) -> f64 {
    re_inner(g, d)
}
