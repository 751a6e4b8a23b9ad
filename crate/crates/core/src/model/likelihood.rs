//! Observed-data log likelihood with the presence indicator summed out.
//!
//! For species `j` at site `i`:
//! - detected at least once: `log Ψ + Σ_k [s log p + (1 − s) log(1 − p)]`
//! - never detected: `logaddexp(log(1 − Ψ), log Ψ + Σ_k log(1 − p))`
//!
//! Sites without checklists contribute nothing. Both branches share one
//! gradient form: with `w` the conditional probability of presence
//! (`w = 1` when detected), `∂ℓ/∂η = w − Ψ` and `∂ℓ/∂ζ_k = w (s_k − p_k)`.

use ndarray::Array2;
use rayon::prelude::*;

use super::params::{Dims, ParameterSet};
use crate::data::DetectionStore;
use crate::error::{Error, Result};
use crate::real::Real;

/// Design matrices and detections arranged for fast likelihood evaluation.
///
/// Checklists are regrouped by site (stable within a site) so every site
/// owns a contiguous row range; each species keeps its detections as sorted
/// indices into that grouped order.
#[derive(Debug, Clone)]
pub struct OccupancyData {
    n_sites: usize,
    d_env: usize,
    d_obs: usize,
    /// Row-major `N × D_env`.
    env: Vec<f64>,
    /// Row-major `K × D_obs`, in grouped order.
    obs: Vec<f64>,
    site_ptr: Vec<usize>,
    detections: Vec<Vec<u32>>,
    /// Grouped row → original checklist index.
    order: Vec<usize>,
    species_names: Vec<String>,
}

/// Mutable gradient slices for one species.
pub(crate) struct SpeciesGrad<'a, T> {
    pub beta_env: &'a mut [T],
    pub gamma: &'a mut T,
    pub beta_obs: &'a mut [T],
}

impl OccupancyData {
    pub fn new(env_design: &Array2<f64>, obs_design: &Array2<f64>, store: &DetectionStore) -> Result<Self> {
        let n_sites = env_design.nrows();
        let k = store.n_checklists();
        if obs_design.nrows() != k {
            return Err(Error::DimensionMismatch(format!(
                "observation design has {} rows for {k} checklists",
                obs_design.nrows()
            )));
        }
        if let Some(&bad) = store.site_of_checklist.iter().find(|&&s| s >= n_sites) {
            return Err(Error::DanglingReference(format!("site index {bad}")));
        }
        if store.n_species() == 0 {
            return Err(Error::EmptyTable("species roster".into()));
        }

        let mut counts = vec![0usize; n_sites + 1];
        for &s in &store.site_of_checklist {
            counts[s + 1] += 1;
        }
        for i in 0..n_sites {
            counts[i + 1] += counts[i];
        }
        let site_ptr = counts;
        let mut fill = site_ptr.clone();
        let mut order = vec![0usize; k];
        let mut position = vec![0u32; k];
        for (c, &s) in store.site_of_checklist.iter().enumerate() {
            order[fill[s]] = c;
            position[c] = fill[s] as u32;
            fill[s] += 1;
        }

        let d_obs = obs_design.ncols();
        let mut obs = Vec::with_capacity(k * d_obs);
        for &c in &order {
            obs.extend(obs_design.row(c).iter());
        }
        let detections = store
            .detections
            .iter()
            .map(|d| {
                let mut g: Vec<u32> = d.iter().map(|&c| position[c as usize]).collect();
                g.sort_unstable();
                g
            })
            .collect();

        Ok(Self {
            n_sites,
            d_env: env_design.ncols(),
            d_obs,
            env: env_design.as_standard_layout().iter().copied().collect(),
            obs,
            site_ptr,
            detections,
            order,
            species_names: store.species_names.clone(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_checklists(&self) -> usize {
        self.order.len()
    }

    pub fn n_species(&self) -> usize {
        self.detections.len()
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.n_species(), self.d_env, self.d_obs)
    }

    pub fn detection_count(&self, j: usize) -> usize {
        self.detections[j].len()
    }

    pub fn visits_per_site(&self) -> Vec<usize> {
        self.site_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Original checklist indices, grouped by site.
    pub fn checklist_order(&self) -> &[usize] {
        &self.order
    }

    fn check(&self, params: &ParameterSet) -> Result<()> {
        if params.dims() != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "parameters {:?} vs data {:?}",
                params.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn log_likelihood(&self, params: &ParameterSet) -> Result<f64> {
        self.check(params)?;
        let parts: Vec<f64> = (0..self.n_species())
            .into_par_iter()
            .map(|j| self.species_log_likelihood(params, j))
            .collect();
        let total: f64 = parts.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFiniteResult("log likelihood".into()));
        }
        Ok(total)
    }

    /// Single-threaded total; used where timing must not depend on the pool.
    pub fn log_likelihood_serial(&self, params: &ParameterSet) -> Result<f64> {
        self.check(params)?;
        let total: f64 = (0..self.n_species())
            .map(|j| self.species_log_likelihood(params, j))
            .sum();
        if !total.is_finite() {
            return Err(Error::NonFiniteResult("log likelihood".into()));
        }
        Ok(total)
    }

    fn species_log_likelihood(&self, params: &ParameterSet, j: usize) -> f64 {
        let be = params.beta_env.row(j).to_vec();
        let bo = params.beta_obs.row(j).to_vec();
        let mut scratch = Vec::new();
        self.species_kernel::<f64>(j, &be, params.gamma[j], &bo, None, &mut scratch)
    }

    /// Per (site, species) contributions, `N × J`, in the site order of the
    /// environment design.
    pub fn block_log_likelihood(&self, params: &ParameterSet) -> Result<Array2<f64>> {
        self.check(params)?;
        let mut out = Array2::zeros((self.n_sites, self.n_species()));
        for j in 0..self.n_species() {
            let be = params.beta_env.row(j).to_vec();
            let bo = params.beta_obs.row(j).to_vec();
            let mut scratch = Vec::new();
            let mut cursor = 0;
            for i in 0..self.n_sites {
                out[[i, j]] = self.site_term::<f64>(j, i, &be, params.gamma[j], &bo, &mut cursor, None, &mut scratch);
            }
        }
        Ok(out)
    }

    /// Log likelihood of one species, optionally accumulating its gradient.
    pub(crate) fn species_kernel<T: Real>(
        &self,
        j: usize,
        beta_env: &[T],
        gamma: T,
        beta_obs: &[T],
        mut grad: Option<SpeciesGrad<'_, T>>,
        scratch: &mut Vec<T>,
    ) -> T {
        let mut ll = T::zero();
        let mut cursor = 0usize;
        for i in 0..self.n_sites {
            ll += self.site_term(j, i, beta_env, gamma, beta_obs, &mut cursor, grad.as_mut(), scratch);
        }
        ll
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn site_term<T: Real>(
        &self,
        j: usize,
        i: usize,
        beta_env: &[T],
        gamma: T,
        beta_obs: &[T],
        cursor: &mut usize,
        grad: Option<&mut SpeciesGrad<'_, T>>,
        scratch: &mut Vec<T>,
    ) -> T {
        let (a, b) = (self.site_ptr[i], self.site_ptr[i + 1]);
        if a == b {
            return T::zero();
        }
        let dets = &self.detections[j];
        let first_det = *cursor;
        while *cursor < dets.len() && (dets[*cursor] as usize) < b {
            *cursor += 1;
        }
        let detected = *cursor > first_det;

        let x = &self.env[i * self.d_env..(i + 1) * self.d_env];
        let mut eta = gamma;
        for (bd, &xd) in beta_env.iter().zip(x) {
            eta += *bd * xd;
        }
        let d_obs = self.d_obs;
        let zeta_at = |k: usize| {
            let w = &self.obs[k * d_obs..(k + 1) * d_obs];
            let mut z = T::zero();
            for (bl, &wl) in beta_obs.iter().zip(w) {
                z += *bl * wl;
            }
            z
        };

        if detected {
            let mut ll = -(-eta).softplus();
            let mut next = first_det;
            match grad {
                None => {
                    for k in a..b {
                        let zeta = zeta_at(k);
                        if next < *cursor && dets[next] as usize == k {
                            next += 1;
                            ll -= (-zeta).softplus();
                        } else {
                            ll -= zeta.softplus();
                        }
                    }
                }
                Some(g) => {
                    for k in a..b {
                        let zeta = zeta_at(k);
                        let dz = if next < *cursor && dets[next] as usize == k {
                            next += 1;
                            ll -= (-zeta).softplus();
                            (-zeta).inv_logit()
                        } else {
                            ll -= zeta.softplus();
                            -zeta.inv_logit()
                        };
                        let w = &self.obs[k * d_obs..(k + 1) * d_obs];
                        for (gl, &wl) in g.beta_obs.iter_mut().zip(w) {
                            *gl += dz * wl;
                        }
                    }
                    let deta = (-eta).inv_logit();
                    *g.gamma += deta;
                    for (gd, &xd) in g.beta_env.iter_mut().zip(x) {
                        *gd += deta * xd;
                    }
                }
            }
            ll
        } else {
            scratch.clear();
            let mut miss = T::zero();
            for k in a..b {
                let zeta = zeta_at(k);
                miss += zeta.softplus();
                scratch.push(zeta);
            }
            let log_absent = -eta.softplus();
            let log_present = -(-eta).softplus() - miss;
            let ll = log_absent.log_add_exp(log_present);
            if let Some(g) = grad {
                let w = (log_present - ll).exp();
                let deta = w - eta.inv_logit();
                *g.gamma += deta;
                for (gd, &xd) in g.beta_env.iter_mut().zip(x) {
                    *gd += deta * xd;
                }
                for (k, &zeta) in (a..b).zip(scratch.iter()) {
                    let dz = -(w * zeta.inv_logit());
                    let wrow = &self.obs[k * d_obs..(k + 1) * d_obs];
                    for (gl, &wl) in g.beta_obs.iter_mut().zip(wrow) {
                        *gl += dz * wl;
                    }
                }
            }
            ll
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn one_site(detected: &[usize], k: usize) -> (OccupancyData, ParameterSet) {
        let store = DetectionStore::from_pairs(vec!["a".into()], vec![0; k], detected.iter().map(|&c| (c, 0))).unwrap();
        let env = array![[0.0]];
        let obs = Array2::ones((k, 1));
        let data = OccupancyData::new(&env, &obs, &store).unwrap();
        // Ψ = 0.5, p = 0.5
        let params = ParameterSet {
            beta_env: array![[0.0]],
            gamma: Array1::zeros(1),
            beta_obs: array![[0.0]],
            mu: Array1::zeros(1),
            sigma: Array1::ones(1),
        };
        (data, params)
    }

    #[test]
    fn single_visit_without_detection() {
        let (d, p) = one_site(&[], 1);
        let ll = d.log_likelihood(&p).unwrap();
        assert!((ll - 0.75f64.ln()).abs() < 1e-15);
        assert!((ll + 0.287682).abs() < 1e-6);
    }

    #[test]
    fn single_visit_with_detection() {
        let (d, p) = one_site(&[0], 1);
        assert!((d.log_likelihood(&p).unwrap() - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_visits_one_detection() {
        let (d, p) = one_site(&[0], 2);
        assert!((d.log_likelihood(&p).unwrap() - 0.125f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sites_without_checklists_contribute_zero() {
        let store = DetectionStore::from_pairs(vec!["a".into()], vec![1, 1], [(0, 0)]).unwrap();
        let env = array![[3.0], [0.0], [-2.0]];
        let obs = Array2::ones((2, 1));
        let data = OccupancyData::new(&env, &obs, &store).unwrap();
        let p = ParameterSet::zeros(data.dims());
        let blocks = data.block_log_likelihood(&p).unwrap();
        assert_eq!(blocks[[0, 0]], 0.0);
        assert_eq!(blocks[[2, 0]], 0.0);
        assert!((blocks[[1, 0]] - 0.125f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn extreme_linear_predictors_stay_finite() {
        let (d, mut p) = one_site(&[], 3);
        p.gamma[0] = 800.0;
        p.beta_obs[[0, 0]] = 800.0;
        assert!(d.log_likelihood(&p).unwrap().is_finite());
        p.gamma[0] = -800.0;
        assert!(d.log_likelihood(&p).unwrap().is_finite());
    }
}
