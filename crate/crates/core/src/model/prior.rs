use std::f64::consts::{LN_2, PI};

use super::params::{Layout, ParameterSet};
use crate::error::Result;
use crate::real::Real;

pub(crate) const GAMMA_PRIOR_SD: f64 = 10.0;

fn half_ln_2pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - half_ln_2pi()
}

/// Log prior density with all normalizing constants.
pub fn log_prior(params: &ParameterSet) -> Result<f64> {
    params.validate()?;
    let mut lp = 0.0;
    lp += params.beta_env.iter().map(|&b| normal_lpdf(b, 0.0, 1.0)).sum::<f64>();
    lp += params.gamma.iter().map(|&g| normal_lpdf(g, 0.0, GAMMA_PRIOR_SD)).sum::<f64>();
    for row in params.beta_obs.rows() {
        for (l, &b) in row.iter().enumerate() {
            lp += normal_lpdf(b, params.mu[l], params.sigma[l]);
        }
    }
    lp += params.mu.iter().map(|&m| normal_lpdf(m, 0.0, 1.0)).sum::<f64>();
    lp += params
        .sigma
        .iter()
        .map(|&s| LN_2 - half_ln_2pi() - 0.5 * s * s)
        .sum::<f64>();
    Ok(lp)
}

/// Log prior over the unconstrained vector (including the `Σ ζ` Jacobian
/// of `σ = exp ζ`), accumulating its gradient into `grad`.
pub(crate) fn log_prior_unconstrained<T: Real>(layout: &Layout, theta: &[T], grad: &mut [T]) -> T {
    let dims = layout.dims;
    let c = half_ln_2pi();
    let mut lp = T::zero();

    let n_env = dims.n_species * dims.d_env;
    for (t, g) in theta[..n_env].iter().zip(&mut grad[..n_env]) {
        lp += *t * *t * -0.5 + (-c);
        *g -= *t;
    }
    let gvar = GAMMA_PRIOR_SD * GAMMA_PRIOR_SD;
    for j in 0..dims.n_species {
        let i = layout.gamma(j);
        let t = theta[i];
        lp += t * t * (-0.5 / gvar) + (-GAMMA_PRIOR_SD.ln() - c);
        grad[i] -= t * (1.0 / gvar);
    }
    for l in 0..dims.d_obs {
        let (im, iz) = (layout.mu(l), layout.zeta(l));
        let (mu, zeta) = (theta[im], theta[iz]);
        let sigma2 = (zeta * 2.0).exp();
        let inv_var = (zeta * -2.0).exp();
        // μ ~ N(0, 1)
        lp += mu * mu * -0.5 + (-c);
        grad[im] -= mu;
        // σ ~ half-normal(1), plus log-Jacobian ζ
        lp += sigma2 * -0.5 + (LN_2 - c) + zeta;
        grad[iz] += -sigma2 + 1.0;
        // β_jl ~ N(μ_l, σ_l²)
        for j in 0..dims.n_species {
            let ib = layout.beta_obs(j, l);
            let r = theta[ib] - mu;
            let r_scaled = r * inv_var;
            lp += r * r_scaled * -0.5 - zeta + (-c);
            grad[ib] -= r_scaled;
            grad[im] += r_scaled;
            grad[iz] += r * r_scaled - T::cst(1.0);
        }
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    #[test]
    fn all_zero_closed_form() {
        let p = ParameterSet::zeros(Dims::new(1, 1, 1));
        let c = half_ln_2pi();
        // β_env, γ, β_obs, μ at zero; σ = 1
        let expected = -c + (-(10f64).ln() - c) + (-c) + (-c) + (LN_2 - c - 0.5);
        assert!((log_prior(&p).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn gamma_term() {
        let mut p = ParameterSet::zeros(Dims::new(1, 0, 1));
        let base = log_prior(&p).unwrap();
        p.gamma[0] = 10.0;
        let delta = log_prior(&p).unwrap() - base;
        // both evaluations share -log(10 sqrt(2π)); only the quadratic term differs
        assert!((delta - (-0.5)).abs() < 1e-14);
        let term = -0.5 * (10.0f64 / 10.0).powi(2) - (10.0 * (2.0 * PI).sqrt()).ln();
        assert!((normal_lpdf(10.0, 0.0, 10.0) - term).abs() < 1e-14);
    }

    #[test]
    fn doubling_sigma_is_local() {
        let mut p = ParameterSet::zeros(Dims::new(2, 1, 2));
        p.beta_obs[[0, 0]] = 0.7;
        p.beta_obs[[1, 1]] = -0.4;
        let base = log_prior(&p).unwrap();
        p.sigma[1] = 2.0;
        let delta = log_prior(&p).unwrap() - base;
        let hn = |s: f64| -0.5 * s * s;
        let mut expect = hn(2.0) - hn(1.0);
        for j in 0..2 {
            let b = p.beta_obs[[j, 1]];
            expect += normal_lpdf(b, 0.0, 2.0) - normal_lpdf(b, 0.0, 1.0);
        }
        assert!((delta - expect).abs() < 1e-14);
    }

    #[test]
    fn unconstrained_prior_adds_jacobian() {
        let mut p = ParameterSet::zeros(Dims::new(2, 2, 2));
        p.sigma[0] = 1.7;
        p.beta_obs[[1, 0]] = 0.3;
        p.mu[1] = -0.2;
        let layout = Layout::anonymous(p.dims());
        let theta = p.pack();
        let mut g = vec![0.0; theta.len()];
        let u = log_prior_unconstrained(&layout, &theta, &mut g);
        let jac: f64 = p.sigma.iter().map(|s| s.ln()).sum();
        assert!((u - (log_prior(&p).unwrap() + jac)).abs() < 1e-12);
    }
}
