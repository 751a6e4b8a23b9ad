//! Trust-region Newton conjugate gradient (Steihaug–Toint).
//!
//! Each outer iteration approximately solves `H p = −g` by conjugate
//! gradients, stopping at the trust-region boundary, on negative curvature,
//! or once the residual falls below `min(0.5, √‖g‖)·‖g‖`. The radius starts
//! at `initial_radius`, doubles when the reduction ratio exceeds 0.75 and is
//! quartered when it falls below 0.25. Steps are accepted when the ratio
//! exceeds `accept_ratio`, so accepted iterates strictly decrease the
//! objective.

use serde::Serialize;

use super::{dot, inf_norm, norm};
use crate::error::Result;

pub trait SecondOrderObjective {
    fn dim(&self) -> usize;
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Serialize)]
pub struct TrustRegionConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    pub accept_ratio: f64,
    /// Cap on inner CG iterations; `None` means `max(2·dim, 20)`.
    pub max_cg_iterations: Option<usize>,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            initial_radius: 1.0,
            max_radius: 1e4,
            accept_ratio: 0.15,
            max_cg_iterations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrustRegionResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
    pub hvp_count: usize,
}

struct CgStep {
    step: Vec<f64>,
    /// Model decrease `−(gᵀp + ½ pᵀHp)`.
    predicted: f64,
}

/// Smallest `τ ≥ 0` with `‖z + τ d‖ = radius`.
fn boundary_tau(z: &[f64], d: &[f64], radius: f64) -> f64 {
    let a = dot(d, d);
    let b = 2.0 * dot(z, d);
    let c = dot(z, z) - radius * radius;
    let disc = (b * b - 4.0 * a * c).max(0.0);
    (-b + disc.sqrt()) / (2.0 * a)
}

fn steihaug<F: SecondOrderObjective>(
    f: &F,
    x: &[f64],
    g: &[f64],
    radius: f64,
    max_cg: usize,
    hvp_count: &mut usize,
) -> Result<CgStep> {
    let n = g.len();
    let gnorm = norm(g);
    let tol = gnorm.sqrt().min(0.5) * gnorm;
    let mut z = vec![0.0; n];
    // residual r = g + H z
    let mut r = g.to_vec();
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut rr = dot(&r, &r);

    let model_decrease = |z: &[f64], r: &[f64]| -0.5 * (dot(g, z) + dot(z, r));

    for _ in 0..max_cg {
        let hd = f.hessian_vector(x, &d)?;
        *hvp_count += 1;
        let dhd = dot(&d, &hd);
        if dhd <= 0.0 {
            let tau = boundary_tau(&z, &d, radius);
            for i in 0..n {
                z[i] += tau * d[i];
                r[i] += tau * hd[i];
            }
            return Ok(CgStep {
                predicted: model_decrease(&z, &r),
                step: z,
            });
        }
        let alpha = rr / dhd;
        let z_next: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
        if norm(&z_next) >= radius {
            let tau = boundary_tau(&z, &d, radius);
            for i in 0..n {
                z[i] += tau * d[i];
                r[i] += tau * hd[i];
            }
            return Ok(CgStep {
                predicted: model_decrease(&z, &r),
                step: z,
            });
        }
        z = z_next;
        for i in 0..n {
            r[i] += alpha * hd[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() < tol {
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            d[i] = -r[i] + beta * d[i];
        }
    }
    Ok(CgStep {
        predicted: model_decrease(&z, &r),
        step: z,
    })
}

/// Minimizes `f` from `x0`. Errors only if the starting point cannot be
/// evaluated; non-finite trial points are rejected and shrink the radius.
pub fn minimize<F: SecondOrderObjective>(f: &F, x0: Vec<f64>, config: &TrustRegionConfig) -> Result<TrustRegionResult> {
    let max_cg = config.max_cg_iterations.unwrap_or((2 * f.dim()).max(20));
    let mut x = x0;
    let (mut value, mut grad) = f.value_and_grad(&x)?;
    let mut radius = config.initial_radius;
    let mut trace = vec![value];
    let mut hvp_count = 0;
    let mut iterations = 0;
    let mut converged = inf_norm(&grad) < config.gradient_tolerance;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let cg = steihaug(f, &x, &grad, radius, max_cg, &mut hvp_count)?;
        let trial: Vec<f64> = x.iter().zip(&cg.step).map(|(a, b)| a + b).collect();
        let evaluated = f.value_and_grad(&trial).ok().filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()));
        let (ratio, accepted) = match evaluated {
            Some((v_new, g_new)) if cg.predicted > 0.0 => {
                let ratio = (value - v_new) / cg.predicted;
                if ratio > config.accept_ratio && v_new < value {
                    x = trial;
                    value = v_new;
                    grad = g_new;
                    trace.push(value);
                    (ratio, true)
                } else {
                    (ratio, false)
                }
            }
            _ => (f64::NEG_INFINITY, false),
        };
        if ratio < 0.25 {
            radius *= 0.25;
        } else if ratio > 0.75 {
            radius = (2.0 * radius).min(config.max_radius);
        }
        converged = inf_norm(&grad) < config.gradient_tolerance;
        if !accepted && radius < 1e-14 {
            log::warn!("trust radius collapsed at iteration {iterations}");
            break;
        }
    }
    Ok(TrustRegionResult {
        grad_inf_norm: inf_norm(&grad),
        x,
        value,
        iterations,
        converged,
        trace,
        hvp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl SecondOrderObjective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((v, g))
        }
        fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
            let (a, b) = (x[0], x[1]);
            let h11 = 2.0 - 400.0 * (b - a * a) + 800.0 * a * a;
            let h12 = -400.0 * a;
            Ok(vec![h11 * v[0] + h12 * v[1], h12 * v[0] + 200.0 * v[1]])
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], &TrustRegionConfig::default()).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn boundary_tau_hits_radius() {
        let z = [0.3, 0.0];
        let d = [1.0, 1.0];
        let tau = boundary_tau(&z, &d, 2.0);
        let end = [z[0] + tau * d[0], z[1] + tau * d[1]];
        assert!((norm(&end) - 2.0).abs() < 1e-12);
    }
}
