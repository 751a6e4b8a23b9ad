//! Single-species maximum likelihood, the non-hierarchical baseline.
//!
//! Each species is fitted on its own by L-BFGS from the origin, using the
//! same sparse marginal likelihood as the hierarchical model. A ridge
//! penalty `ridge·‖θ‖²/2` is available for separation pathologies; with
//! `ridge = 0` the fit is plain maximum likelihood.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::likelihood::SpeciesGrad;
use crate::model::{Dims, Layout, OccupancyData, ParameterSet};
use crate::optim::lbfgs::{self, LbfgsConfig};

/// Intercept assigned to species skipped for lack of detections, the
/// `Ψ → 0` limit of their likelihood.
pub const UNDETECTED_GAMMA: f64 = -30.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MleConfig {
    pub ridge: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub parallel: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            max_iterations: 1000,
            gradient_tolerance: 1e-5,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeciesMLE {
    pub species: String,
    pub beta_env: Vec<f64>,
    pub gamma: f64,
    pub beta_obs: Vec<f64>,
    pub converged: bool,
    /// Penalized when `ridge > 0`.
    pub final_neg_loglik: f64,
    pub ridge: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

impl SpeciesMLE {
    /// `[β_env; γ; β_obs]`
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.beta_env.clone();
        t.push(self.gamma);
        t.extend_from_slice(&self.beta_obs);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleReport {
    pub fits: Vec<SpeciesMLE>,
    /// Species with no detections, which were not fitted.
    pub skipped: Vec<String>,
}

/// Negative log likelihood of species `j` at `theta = [β_env; γ; β_obs]`
/// plus `ridge·‖θ‖²/2`, with its gradient written into `grad`.
pub fn species_objective(data: &OccupancyData, j: usize, theta: &[f64], ridge: f64, grad: &mut [f64]) -> f64 {
    let dims = data.dims();
    let (d_env, d_obs) = (dims.d_env, dims.d_obs);
    assert_eq!(theta.len(), d_env + 1 + d_obs, "theta length");
    let (be, rest) = theta.split_at(d_env);
    let (gamma, bo) = (rest[0], &rest[1..]);
    let mut g_env = vec![0.0; d_env];
    let mut g_gamma = 0.0;
    let mut g_obs = vec![0.0; d_obs];
    let mut scratch = Vec::new();
    let ll = data.species_kernel(
        j,
        be,
        gamma,
        bo,
        Some(SpeciesGrad {
            beta_env: &mut g_env,
            gamma: &mut g_gamma,
            beta_obs: &mut g_obs,
        }),
        &mut scratch,
    );
    let mut value = -ll;
    for (i, g) in g_env.iter().chain(std::iter::once(&g_gamma)).chain(&g_obs).enumerate() {
        grad[i] = -g + ridge * theta[i];
        value += 0.5 * ridge * theta[i] * theta[i];
    }
    value
}

pub fn fit_species_mle(data: &OccupancyData, j: usize, config: &MleConfig) -> Result<SpeciesMLE> {
    if j >= data.n_species() {
        return Err(Error::InvalidInput(format!("species index {j} out of range")));
    }
    let name = data.species_names()[j].clone();
    if data.detection_count(j) == 0 {
        return Err(Error::NoDetections(name));
    }
    if !(config.ridge >= 0.0) {
        return Err(Error::InvalidInput("ridge must be non-negative".into()));
    }
    let dims = data.dims();
    let n = dims.d_env + 1 + dims.d_obs;
    let lb = LbfgsConfig {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        ..LbfgsConfig::default()
    };
    let r = lbfgs::minimize(|t, g| species_objective(data, j, t, config.ridge, g), vec![0.0; n], &lb);
    if !r.converged {
        log::warn!(
            "MLE for {name} did not converge (gradient inf-norm {:.3e} after {} iterations)",
            r.grad_inf_norm,
            r.iterations
        );
    }
    let mut x = r.x;
    let beta_obs = x.split_off(dims.d_env + 1);
    let gamma = x.pop().expect("theta holds gamma");
    Ok(SpeciesMLE {
        species: name,
        beta_env: x,
        gamma,
        beta_obs,
        converged: r.converged,
        final_neg_loglik: r.value,
        ridge: config.ridge,
        iterations: r.iterations,
        evaluations: r.evaluations,
    })
}

/// Independent fits of every species; species without detections are
/// skipped and listed in the report.
pub fn fit_all_mle(data: &OccupancyData, config: &MleConfig) -> Result<MleReport> {
    let fit = |j: usize| -> Result<Option<SpeciesMLE>> {
        match fit_species_mle(data, j, config) {
            Ok(f) => Ok(Some(f)),
            Err(Error::NoDetections(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let results: Vec<Option<SpeciesMLE>> = if config.parallel {
        (0..data.n_species()).into_par_iter().map(fit).collect::<Result<_>>()?
    } else {
        (0..data.n_species()).map(fit).collect::<Result<_>>()?
    };
    let mut report = MleReport {
        fits: Vec::new(),
        skipped: Vec::new(),
    };
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Some(f) => report.fits.push(f),
            None => {
                log::info!("skipping {}: no detections", data.species_names()[j]);
                report.skipped.push(data.species_names()[j].clone());
            }
        }
    }
    Ok(report)
}

impl MleReport {
    /// Point estimates for all species in `layout` order. Skipped species
    /// get zero slopes and the [`UNDETECTED_GAMMA`] intercept; `μ` and `σ`
    /// are not estimated and set to 0 and 1.
    pub fn to_parameter_set(&self, layout: &Layout) -> Result<ParameterSet> {
        let dims = layout.dims;
        let mut params = ParameterSet::zeros(dims);
        let by_name: HashMap<&str, &SpeciesMLE> = self.fits.iter().map(|f| (f.species.as_str(), f)).collect();
        for (j, name) in layout.species.iter().enumerate() {
            match by_name.get(name.as_str()) {
                Some(f) => {
                    if f.beta_env.len() != dims.d_env || f.beta_obs.len() != dims.d_obs {
                        return Err(Error::DimensionMismatch(format!("MLE for {name}")));
                    }
                    params.beta_env.row_mut(j).assign(&Array1::from(f.beta_env.clone()));
                    params.gamma[j] = f.gamma;
                    params.beta_obs.row_mut(j).assign(&Array1::from(f.beta_obs.clone()));
                }
                None => params.gamma[j] = UNDETECTED_GAMMA,
            }
        }
        Ok(params)
    }

    /// `species,block,column,value,converged`
    pub fn write_csv<W: Write>(&self, layout: &Layout, writer: W) -> Result<()> {
        let wrap = |e: csv::Error| Error::csv("mle", e);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["species", "block", "column", "value", "converged"]).map_err(wrap)?;
        for f in &self.fits {
            let conv = f.converged.to_string();
            for (d, v) in f.beta_env.iter().enumerate() {
                w.write_record([&f.species, "beta_env", &layout.env_columns[d], &v.to_string(), &conv])
                    .map_err(wrap)?;
            }
            w.write_record([&f.species, "gamma", "", &f.gamma.to_string(), &conv]).map_err(wrap)?;
            for (l, v) in f.beta_obs.iter().enumerate() {
                w.write_record([&f.species, "beta_obs", &layout.obs_columns[l], &v.to_string(), &conv])
                    .map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| Error::io("mle", e))?;
        Ok(())
    }

    /// Reads estimates written by [`MleReport::write_csv`]; `layout` supplies
    /// species and column names. Species absent from the file are reported
    /// as skipped.
    pub fn read_csv<R: Read>(reader: R, layout: &Layout) -> Result<Self> {
        let wrap = |e: csv::Error| Error::csv("mle", e);
        let dims: Dims = layout.dims;
        let mut r = csv::Reader::from_reader(reader);
        let mut fits: HashMap<String, SpeciesMLE> = HashMap::new();
        for rec in r.records() {
            let rec = rec.map_err(wrap)?;
            if rec.len() != 5 {
                return Err(Error::InvalidInput("expected species,block,column,value,converged".into()));
            }
            let bad = |v: &str| Error::Parse {
                path: "mle".into(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                value: v.to_owned(),
            };
            let value: f64 = rec[3].parse().map_err(|_| bad(&rec[3]))?;
            let converged: bool = rec[4].parse().map_err(|_| bad(&rec[4]))?;
            let fit = fits.entry(rec[0].to_owned()).or_insert_with(|| SpeciesMLE {
                species: rec[0].to_owned(),
                beta_env: vec![f64::NAN; dims.d_env],
                gamma: f64::NAN,
                beta_obs: vec![f64::NAN; dims.d_obs],
                converged,
                final_neg_loglik: f64::NAN,
                ridge: f64::NAN,
                iterations: 0,
                evaluations: 0,
            });
            let find = |cols: &[String]| cols.iter().position(|c| c == &rec[2]).ok_or_else(|| bad(&rec[2]));
            match &rec[1] {
                "beta_env" => fit.beta_env[find(&layout.env_columns)?] = value,
                "gamma" => fit.gamma = value,
                "beta_obs" => fit.beta_obs[find(&layout.obs_columns)?] = value,
                other => return Err(bad(other)),
            }
        }
        let mut report = MleReport {
            fits: Vec::new(),
            skipped: Vec::new(),
        };
        for name in &layout.species {
            match fits.remove(name) {
                Some(f) => {
                    if f.theta().iter().any(|v| v.is_nan()) {
                        return Err(Error::InvalidInput(format!("incomplete estimates for {name}")));
                    }
                    report.fits.push(f);
                }
                None => report.skipped.push(name.clone()),
            }
        }
        if let Some(extra) = fits.keys().next() {
            return Err(Error::DanglingReference(format!("species `{extra}` in estimates")));
        }
        Ok(report)
    }
}
