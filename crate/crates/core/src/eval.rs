//! Held-out scoring: AUC, mean log likelihood, Brier score against expert
//! maps, bootstrap standard errors and occupancy interval maps.

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::DetectionStore;
use crate::error::{Error, Result};
use crate::model::{self, Dims, ParameterSet};

pub const PROB_CLAMP: f64 = 1e-12;
pub const DEFAULT_PREDICTIVE_DRAWS: usize = 500;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
const PREDICT_CHUNK: usize = 16;

/// Turns rows of flat unconstrained draws into parameter sets.
pub fn draws_to_params(dims: Dims, draws: &Array2<f64>) -> Result<Vec<ParameterSet>> {
    draws
        .rows()
        .into_iter()
        .map(|row| ParameterSet::unpack(dims, row.as_slice().expect("standard layout")))
        .collect()
}

/// Posterior-mean probability that each checklist records each species,
/// `E[Ψ_ij p_kj]` averaged over `draws`; `K × J`.
pub fn predict_checklist_prob(
    draws: &[ParameterSet],
    env_design: &Array2<f64>,
    obs_design: &Array2<f64>,
    site_index: &[usize],
) -> Result<Array2<f64>> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no posterior draws".into()));
    }
    if site_index.len() != obs_design.nrows() {
        return Err(Error::DimensionMismatch("site index vs observation rows".into()));
    }
    if let Some(&bad) = site_index.iter().find(|&&i| i >= env_design.nrows()) {
        return Err(Error::DanglingReference(format!("site index {bad}")));
    }
    let j = draws[0].dims().n_species;
    let k = obs_design.nrows();
    let chunk_sums: Vec<Array2<f64>> = draws
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| -> Result<Array2<f64>> {
            let mut acc = Array2::zeros((k, j));
            for params in chunk {
                let psi = model::psi(params, env_design)?;
                let mut p = model::detection_prob(params, obs_design)?;
                for (c, mut row) in p.rows_mut().into_iter().enumerate() {
                    row *= &psi.row(site_index[c]);
                }
                acc += &p;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut partial = Array2::zeros((k, j));
    for c in &chunk_sums {
        partial += c;
    }
    Ok(partial / draws.len() as f64)
}

/// Mann–Whitney AUC with ties counted as ½.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("scores vs labels".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Mean Bernoulli log likelihood with probabilities clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn mean_log_likelihood(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch("probabilities vs labels".into()));
    }
    if probs.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Mean squared difference between occupancy and a binary expert map.
pub fn brier_vs_expert(psi_mean: &[f64], expert: &[f64]) -> Result<f64> {
    if psi_mean.len() != expert.len() {
        return Err(Error::DimensionMismatch("psi vs expert cells".into()));
    }
    if psi_mean.is_empty() {
        return Err(Error::InvalidInput("no cells".into()));
    }
    if let Some(v) = expert.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(format!("expert values must be 0 or 1, got {v}")));
    }
    Ok(psi_mean.iter().zip(expert).map(|(p, e)| (p - e).powi(2)).sum::<f64>() / psi_mean.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapSe {
    pub se: f64,
    /// Resamples dropped because the metric was undefined on them.
    pub skipped: usize,
}

/// Standard deviation of `metric` over `n_boot` resamples of the indices.
pub fn bootstrap_se<F>(metric: F, scores: &[f64], labels: &[bool], n_boot: usize, seed: u64) -> Result<BootstrapSe>
where
    F: Fn(&[f64], &[bool]) -> Result<f64>,
{
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch("scores vs labels".into()));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_boot);
    let mut skipped = 0;
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    for _ in 0..n_boot {
        for i in 0..n {
            let k = rng.random_range(0..n);
            s[i] = scores[k];
            l[i] = labels[k];
        }
        match metric(&s, &l) {
            Ok(v) => values.push(v),
            Err(Error::DegenerateLabels) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if values.len() < 2 {
        return Ok(BootstrapSe { se: f64::NAN, skipped });
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    let var = m2 / (values.len() - 1) as f64;
    Ok(BootstrapSe { se: var.sqrt(), skipped })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone)]
pub struct PsiMaps {
    pub lower: Array2<f64>,
    pub mean: Array2<f64>,
    pub upper: Array2<f64>,
}

/// Per-cell lower quantile, mean and upper quantile of `Ψ` over draws.
pub fn psi_interval_maps(draws: &[ParameterSet], env_design: &Array2<f64>, levels: (f64, f64)) -> Result<PsiMaps> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no posterior draws".into()));
    }
    let surfaces: Vec<Array2<f64>> = draws
        .par_iter()
        .map(|p| model::psi(p, env_design))
        .collect::<Result<_>>()?;
    let (n, j) = surfaces[0].dim();
    let mut maps = PsiMaps {
        lower: Array2::zeros((n, j)),
        mean: Array2::zeros((n, j)),
        upper: Array2::zeros((n, j)),
    };
    let mut column = Vec::with_capacity(surfaces.len());
    for i in 0..n {
        for s in 0..j {
            column.clear();
            column.extend(surfaces.iter().map(|m| m[[i, s]]));
            let mut mean = 0.0;
            for (t, v) in column.iter().enumerate() {
                mean += (v - mean) / (t + 1) as f64;
            }
            maps.mean[[i, s]] = mean;
            column.sort_by(f64::total_cmp);
            maps.lower[[i, s]] = quantile_sorted(&column, levels.0);
            maps.upper[[i, s]] = quantile_sorted(&column, levels.1);
        }
    }
    Ok(maps)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeciesEval {
    pub species: String,
    pub n_test_positives: usize,
    /// NaN when the test labels are all one class.
    pub auc: f64,
    pub mean_log_lik: f64,
    pub auc_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub rows: Vec<SpeciesEval>,
    /// Over species with a defined AUC.
    pub mean_auc: f64,
    pub mean_log_lik: f64,
}

/// Dense `K × J` labels from a detection store.
pub fn label_matrix(store: &DetectionStore) -> Array2<bool> {
    let mut out = Array2::from_elem((store.n_checklists(), store.n_species()), false);
    for (j, d) in store.detections.iter().enumerate() {
        for &c in d {
            out[[c as usize, j]] = true;
        }
    }
    out
}

/// Scores `probs` (`K × J`) against held-out detections. Bootstrap seeds
/// are derived per species from `seed`.
pub fn evaluate(probs: &Array2<f64>, test: &DetectionStore, n_boot: usize, seed: u64) -> Result<EvalReport> {
    if probs.dim() != (test.n_checklists(), test.n_species()) {
        return Err(Error::DimensionMismatch("predictions vs test detections".into()));
    }
    let labels = label_matrix(test);
    let rows = (0..test.n_species())
        .into_par_iter()
        .map(|j| -> Result<SpeciesEval> {
            let s: Vec<f64> = probs.column(j).to_vec();
            let l: Vec<bool> = labels.column(j).to_vec();
            let (auc_value, auc_se) = match auc(&s, &l) {
                Ok(a) => {
                    let species_seed = seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    (a, bootstrap_se(auc, &s, &l, n_boot, species_seed)?.se)
                }
                Err(Error::DegenerateLabels) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            Ok(SpeciesEval {
                species: test.species_names[j].clone(),
                n_test_positives: l.iter().filter(|&&x| x).count(),
                auc: auc_value,
                mean_log_lik: mean_log_likelihood(&s, &l)?,
                auc_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<f64> = rows.iter().map(|r| r.auc).filter(|a| !a.is_nan()).collect();
    let mean_auc = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let mean_log_lik = rows.iter().map(|r| r.mean_log_lik).sum::<f64>() / rows.len().max(1) as f64;
    Ok(EvalReport {
        rows,
        mean_auc,
        mean_log_lik,
    })
}

impl EvalReport {
    /// `species,n_test_positives,auc,mean_log_lik,auc_se` plus a final
    /// `mean` row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let wrap = |e: csv::Error| Error::csv("evaluation", e);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["species", "n_test_positives", "auc", "mean_log_lik", "auc_se"])
            .map_err(wrap)?;
        for r in &self.rows {
            w.write_record([
                r.species.clone(),
                r.n_test_positives.to_string(),
                r.auc.to_string(),
                r.mean_log_lik.to_string(),
                r.auc_se.to_string(),
            ])
            .map_err(wrap)?;
        }
        let positives: usize = self.rows.iter().map(|r| r.n_test_positives).sum();
        w.write_record([
            "mean".to_owned(),
            positives.to_string(),
            self.mean_auc.to_string(),
            self.mean_log_lik.to_string(),
            String::new(),
        ])
        .map_err(wrap)?;
        w.flush().map_err(|e| Error::io("evaluation", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpertRow {
    pub species: String,
    pub brier: f64,
}

/// Brier score per species of `psi_mean` (`N × J`) against `expert` maps.
pub fn expert_report(psi_mean: &Array2<f64>, expert: &Array2<f64>, species: &[String]) -> Result<Vec<ExpertRow>> {
    if psi_mean.dim() != expert.dim() || species.len() != psi_mean.ncols() {
        return Err(Error::DimensionMismatch("psi vs expert maps".into()));
    }
    species
        .iter()
        .enumerate()
        .map(|(j, s)| {
            Ok(ExpertRow {
                species: s.clone(),
                brier: brier_vs_expert(&psi_mean.column(j).to_vec(), &expert.column(j).to_vec())?,
            })
        })
        .collect()
}
