//! Multi-species occupancy-detection model.
//!
//! Occupancy: `logit Ψ_ij = x_i·β_j^env + γ_j`. Detection on checklist `k`
//! at a site where the species is present: `logit p_ijk = w_ik·β_j^obs`.
//! Detection slopes share a group prior `β_jl^obs ~ N(μ_l, σ_l²)` with
//! `μ_l ~ N(0, 1)` and `σ_l ~ half-normal(1)`; `β^env ~ N(0, I)` and
//! `γ_j ~ N(0, 10²)` independently.

pub(crate) mod likelihood;
mod params;
mod posterior;
mod prior;

pub use likelihood::OccupancyData;
pub use params::{Block, Coordinate, Dims, Layout, ParameterSet};
pub use posterior::OccupancyPosterior;
pub use prior::log_prior;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::real::inv_logit;

/// Occupancy probabilities, `N × J`.
pub fn psi(params: &ParameterSet, env_design: &Array2<f64>) -> Result<Array2<f64>> {
    let (n_species, d_env) = params.beta_env.dim();
    if env_design.ncols() != d_env {
        return Err(Error::DimensionMismatch(format!(
            "environment design has {} columns, parameters expect {d_env}",
            env_design.ncols()
        )));
    }
    let mut out = env_design.dot(&params.beta_env.t());
    for mut row in out.rows_mut() {
        for j in 0..n_species {
            row[j] = inv_logit(row[j] + params.gamma[j]);
        }
    }
    Ok(out)
}

/// Per-checklist detection probabilities given presence, `K × J`.
pub fn detection_prob(params: &ParameterSet, obs_design: &Array2<f64>) -> Result<Array2<f64>> {
    let d_obs = params.beta_obs.ncols();
    if obs_design.ncols() != d_obs {
        return Err(Error::DimensionMismatch(format!(
            "observation design has {} columns, parameters expect {d_obs}",
            obs_design.ncols()
        )));
    }
    Ok(obs_design.dot(&params.beta_obs.t()).mapv(inv_logit))
}
