//! Box-constrained limited-memory BFGS with projected backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest entry falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers the objective by less than this
    /// fraction.
    pub rel_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 2000,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
        }
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    RelativeDecrease,
    /// No decrease was found even along the projected steepest descent.
    NoDecrease,
    MaxIterations,
}

impl StopReason {
    pub fn converged(self) -> bool {
        !matches!(self, StopReason::MaxIterations)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub projected_gradient_norm: f64,
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Entries that may move: not pinned at a bound by the gradient.
fn free_mask(x: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<bool> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| !((xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0)))
        .collect()
}

fn masked_dot(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|((x, y), _)| x * y)
        .sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over the box `[lo, hi]^n`. `f` returns value and gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: f64, hi: f64, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let mut iterations = 0;

    let pg_norm = |x: &[f64], g: &[f64]| {
        let mask = free_mask(x, g, lo, hi);
        g.iter()
            .zip(&mask)
            .filter(|(_, m)| **m)
            .fold(0.0f64, |a, (gi, _)| a.max(gi.abs()))
    };

    let reason = loop {
        let mask = free_mask(&x, &g, lo, hi);
        let pgn = pg_norm(&x, &g);
        if pgn < opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }

        let mut d = two_loop(&g, &memory, &mask);
        if !(dot(&g, &d) < 0.0) || memory.is_empty() {
            memory.clear();
            d = g.iter().zip(&mask).map(|(gi, m)| if *m { -gi } else { 0.0 }).collect();
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            // first-order steps and oversized steps start from a bounded move
            let mut step = if memory.is_empty() {
                (0.1 * (hi - lo).min(1.0) / dmax).min(1.0)
            } else {
                1.0f64.min(0.5 * (hi - lo) / dmax)
            };
            for _ in 0..60 {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
                project(&mut xn, lo, hi);
                let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &moved);
                if decrease >= 0.0 && moved.iter().all(|v| *v == 0.0) {
                    break;
                }
                let (fn_, gn) = f(&xn);
                evaluations += 1;
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease && fn_ <= fx {
                    accepted = Some((xn, fn_, gn, moved));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() || attempt == 1 {
                break;
            }
            // retry along projected steepest descent with fresh memory
            memory.clear();
            d = g.iter().zip(&mask).map(|(gi, m)| if *m { -gi } else { 0.0 }).collect();
        }

        let Some((xn, fn_, gn, s)) = accepted else {
            break StopReason::NoDecrease;
        };
        iterations += 1;
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            memory.push_back((s, y));
            if memory.len() > opts.memory {
                memory.pop_front();
            }
        }
        let rel = (fx - fn_) / fx.abs().max(fn_.abs()).max(f64::MIN_POSITIVE);
        x = xn;
        fx = fn_;
        g = gn;
        history.push(fx);
        if rel < opts.rel_tol {
            break StopReason::RelativeDecrease;
        }
    };
    debug_assert_eq!(x.len(), n);
    let projected_gradient_norm = pg_norm(&x, &g);
    LbfgsOutcome {
        x,
        value: fx,
        iterations,
        evaluations,
        reason,
        history,
        projected_gradient_norm,
    }
}

/// Two-loop recursion restricted to the free entries.
fn two_loop(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>, mask: &[bool]) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(mask).map(|(gi, m)| if *m { *gi } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(memory.len());
    let mut used = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let sy = masked_dot(s, y, mask);
        if sy <= 0.0 {
            continue;
        }
        let rho = 1.0 / sy;
        let a = rho * masked_dot(s, &q, mask);
        for ((qi, yi), m) in q.iter_mut().zip(y).zip(mask) {
            if *m {
                *qi -= a * yi;
            }
        }
        alphas.push(a);
        used.push((s, y, rho));
    }
    let gamma = used
        .first()
        .map(|(s, y, _)| masked_dot(s, y, mask) / masked_dot(y, y, mask))
        .filter(|v| v.is_finite() && *v > 0.0)
        .unwrap_or(1.0);
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, rho), a) in used.iter().rev().zip(alphas.iter().rev()) {
        let b = rho * masked_dot(y, &q, mask);
        for ((qi, si), m) in q.iter_mut().zip(s.iter()).zip(mask) {
            if *m {
                *qi += (a - b) * si;
            }
        }
    }
    q.iter().map(|v| -v).collect()
}
