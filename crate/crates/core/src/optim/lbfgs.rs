//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use super::{dot, inf_norm};

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Also stop once the predicted decrease `−gᵀd` of a full step falls
    /// below this fraction of `max(|f|, 1)`.
    pub decrement_tolerance: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-5,
            decrement_tolerance: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    grad: Vec<f64>,
}

/// Minimizes `f`, where `f(x, grad)` returns the value and fills the
/// gradient. Non-finite values are treated as `+∞` by the line search.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, config: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut stalled = false;

    let mut eval_at = |x: &[f64], dir: &[f64], alpha: f64, evals: &mut usize| -> Probe {
        let y: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let mut g = vec![0.0; n];
        let mut v = f(&y, &mut g);
        *evals += 1;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            v = f64::INFINITY;
        }
        Probe {
            alpha,
            value: v,
            slope: dot(&g, dir),
            grad: g,
        }
    };

    while inf_norm(&grad) >= config.gradient_tolerance && iterations < config.max_iterations {
        iterations += 1;
        // two-loop recursion
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let scale = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / inf_norm(&grad).max(1.0));
        for v in q.iter_mut() {
            *v *= scale;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += (a - b) * s[i];
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope0 = dot(&grad, &dir);
        if slope0 >= 0.0 {
            history.clear();
            dir = grad.iter().map(|v| -v).collect();
            slope0 = dot(&grad, &dir);
        }
        if -slope0 <= config.decrement_tolerance * value.abs().max(1.0) {
            stalled = true;
            break;
        }

        // Nocedal & Wright, algorithms 3.5 / 3.6
        let start = Probe {
            alpha: 0.0,
            value,
            slope: slope0,
            grad: grad.clone(),
        };
        let mut prev = Probe {
            alpha: 0.0,
            value,
            slope: slope0,
            grad: grad.clone(),
        };
        let mut alpha = 1.0;
        let mut accepted: Option<Probe> = None;
        for i in 0..30 {
            let cur = eval_at(&x, &dir, alpha, &mut evaluations);
            if cur.value > value + C1 * alpha * slope0 || (i > 0 && cur.value >= prev.value) {
                accepted = zoom(&mut eval_at, &x, &dir, &start, prev, cur, &mut evaluations);
                break;
            }
            if cur.slope.abs() <= -C2 * slope0 {
                accepted = Some(cur);
                break;
            }
            if cur.slope >= 0.0 {
                accepted = zoom(&mut eval_at, &x, &dir, &start, cur, prev, &mut evaluations);
                break;
            }
            prev = cur;
            alpha *= 2.0;
        }
        let Some(step) = accepted else {
            break;
        };
        if !(step.value < value) {
            break;
        }
        let s: Vec<f64> = dir.iter().map(|d| step.alpha * d).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        for i in 0..n {
            x[i] += s[i];
        }
        value = step.value;
        grad = step.grad;
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
    }

    LbfgsResult {
        grad_inf_norm: inf_norm(&grad),
        converged: stalled || inf_norm(&grad) < config.gradient_tolerance,
        x,
        value,
        iterations,
        evaluations,
    }
}

fn zoom(
    eval_at: &mut impl FnMut(&[f64], &[f64], f64, &mut usize) -> Probe,
    x: &[f64],
    dir: &[f64],
    start: &Probe,
    mut lo: Probe,
    mut hi: Probe,
    evals: &mut usize,
) -> Option<Probe> {
    for _ in 0..40 {
        let alpha = interpolate(&lo, &hi);
        let cur = eval_at(x, dir, alpha, evals);
        if cur.value > start.value + C1 * alpha * start.slope || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * start.slope {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 {
            break;
        }
    }
    (lo.alpha > 0.0 && lo.value < start.value).then_some(lo)
}

/// Cubic interpolation between two probes, safeguarded to the inner 80% of
/// the bracket; bisection when the cubic is unusable.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let mid = 0.5 * (a + b);
    if !hi.value.is_finite() {
        return mid;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (min, max) = (a.min(b), a.max(b));
    let margin = 0.1 * (max - min);
    if t.is_finite() && t > min + margin && t < max - margin {
        t
    } else {
        mid
    }
}
