use rayon::prelude::*;

use super::likelihood::{OccupancyData, SpeciesGrad};
use super::params::Layout;
use super::prior::log_prior_unconstrained;
use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::real::{Dual, Real};

/// Unnormalized log posterior over the flat unconstrained vector: log prior
/// (σ = exp ζ, with the `Σ ζ` Jacobian) plus the marginal log likelihood.
///
/// Hessian-vector products are exact: the analytic gradient is re-run over
/// dual numbers seeded with the direction.
#[derive(Debug, Clone)]
pub struct OccupancyPosterior {
    data: OccupancyData,
    layout: Layout,
}

impl OccupancyPosterior {
    pub fn new(data: OccupancyData, layout: Layout) -> Result<Self> {
        if data.dims() != layout.dims {
            return Err(Error::DimensionMismatch(format!(
                "layout {:?} vs data {:?}",
                layout.dims,
                data.dims()
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn data(&self) -> &OccupancyData {
        &self.data
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn log_posterior_unconstrained(&self, v: &[f64]) -> f64 {
        self.log_density(v)
    }

    pub fn grad_log_posterior_unconstrained(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        self.log_density_and_grad(v, &mut g);
        g
    }

    fn eval<T: Real>(&self, theta: &[T], grad: &mut [T]) -> T {
        assert_eq!(theta.len(), self.layout.len(), "parameter vector length");
        grad.fill(T::zero());
        let mut lp = log_prior_unconstrained(&self.layout, theta, grad);
        let layout = &self.layout;
        let dims = layout.dims;
        let parts: Vec<(T, Vec<T>, T, Vec<T>)> = (0..dims.n_species)
            .into_par_iter()
            .map(|j| {
                let be = &theta[layout.beta_env(j, 0)..layout.beta_env(j, 0) + dims.d_env];
                let bo = &theta[layout.beta_obs(j, 0)..layout.beta_obs(j, 0) + dims.d_obs];
                let mut g_env = vec![T::zero(); dims.d_env];
                let mut g_gamma = T::zero();
                let mut g_obs = vec![T::zero(); dims.d_obs];
                let mut scratch = Vec::new();
                let ll = self.data.species_kernel(
                    j,
                    be,
                    theta[layout.gamma(j)],
                    bo,
                    Some(SpeciesGrad {
                        beta_env: &mut g_env,
                        gamma: &mut g_gamma,
                        beta_obs: &mut g_obs,
                    }),
                    &mut scratch,
                );
                (ll, g_env, g_gamma, g_obs)
            })
            .collect();
        for (j, (ll, g_env, g_gamma, g_obs)) in parts.into_iter().enumerate() {
            lp += ll;
            for (d, g) in g_env.into_iter().enumerate() {
                grad[layout.beta_env(j, d)] += g;
            }
            grad[layout.gamma(j)] += g_gamma;
            for (l, g) in g_obs.into_iter().enumerate() {
                grad[layout.beta_obs(j, l)] += g;
            }
        }
        lp
    }
}

impl LogDensity for OccupancyPosterior {
    fn dim(&self) -> usize {
        self.layout.len()
    }

    fn log_density_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(x, grad)
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut scratch_grad = vec![0.0; x.len()];
        let lp = log_prior_unconstrained(&self.layout, x, &mut scratch_grad);
        let layout = &self.layout;
        let dims = layout.dims;
        let parts: Vec<f64> = (0..dims.n_species)
            .into_par_iter()
            .map(|j| {
                let be = &x[layout.beta_env(j, 0)..layout.beta_env(j, 0) + dims.d_env];
                let bo = &x[layout.beta_obs(j, 0)..layout.beta_obs(j, 0) + dims.d_obs];
                let mut scratch = Vec::new();
                self.data
                    .species_kernel::<f64>(j, be, x[layout.gamma(j)], bo, None, &mut scratch)
            })
            .collect();
        lp + parts.iter().sum::<f64>()
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut grad = vec![0.0; x.len()];
        self.grad_and_hessian_vector(x, v, &mut grad, out);
    }

    fn grad_and_hessian_vector(&self, x: &[f64], v: &[f64], grad: &mut [f64], out: &mut [f64]) {
        let theta: Vec<Dual> = x.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
        let mut dgrad = vec![Dual::default(); x.len()];
        self.eval(&theta, &mut dgrad);
        for ((g, o), d) in grad.iter_mut().zip(out.iter_mut()).zip(dgrad) {
            *g = d.re;
            *o = d.du;
        }
    }
}
