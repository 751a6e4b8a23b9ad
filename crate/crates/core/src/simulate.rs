//! Synthetic data from the generative model, plus a brute-force likelihood.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ChecklistTable, Dataset, DetectionStore, SiteTable};
use crate::error::{Error, Result};
use crate::model::{self, Dims, Layout, OccupancyData, ParameterSet};

/// Standard deviation of simulated intercepts, narrower than the fitting
/// prior so species are neither everywhere nor nowhere.
pub const SIM_GAMMA_SD: f64 = 2.0;

pub const TAIL_EXPONENT: f64 = 2.0;
pub const TAIL_CAP: usize = 500;

/// Draws parameters from the generative prior. With `hyper = Some((μ, σ))`
/// the group parameters are fixed; `σ_l = 0` gives every species
/// `β_jl^obs = μ_l` exactly.
pub fn sample_params(dims: Dims, seed: u64, hyper: Option<(&[f64], &[f64])>) -> Result<ParameterSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Dims {
        n_species, d_env, d_obs,
    } = dims;
    let (mu, sigma): (Array1<f64>, Array1<f64>) = match hyper {
        Some((mu, sigma)) => {
            if mu.len() != d_obs || sigma.len() != d_obs {
                return Err(Error::DimensionMismatch("hyperparameters must have length D_obs".into()));
            }
            if sigma.iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::DomainError("sigma must be non-negative".into()));
            }
            (Array1::from(mu.to_vec()), Array1::from(sigma.to_vec()))
        }
        None => {
            let mu = (0..d_obs).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let sigma = (0..d_obs).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
            (mu, sigma)
        }
    };
    let beta_env = Array2::from_shape_fn((n_species, d_env), |_| rng.sample(StandardNormal));
    let gamma = Array1::from_shape_fn(n_species, |_| SIM_GAMMA_SD * rng.sample::<f64, _>(StandardNormal));
    let beta_obs = Array2::from_shape_fn((n_species, d_obs), |(_, l)| {
        mu[l] + sigma[l] * rng.sample::<f64, _>(StandardNormal)
    });
    Ok(ParameterSet {
        beta_env,
        gamma,
        beta_obs,
        mu,
        sigma,
    })
}

/// Distribution of checklists per site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VisitLaw {
    /// `1 + Poisson(mean − 1)` visits per site.
    Poisson { mean: f64 },
    /// One visit, except that with probability `q` a site draws from
    /// `P(k) ∝ k^(−exponent)` on `2..=cap`; `q` is set to match `mean`.
    HeavyTail { mean: f64, exponent: f64, cap: usize },
}

impl VisitLaw {
    /// Mostly single visits with a power-law tail (exponent 2, cap 500).
    pub fn skewed(mean: f64) -> Self {
        Self::HeavyTail {
            mean,
            exponent: TAIL_EXPONENT,
            cap: TAIL_CAP,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Poisson { mean } | Self::HeavyTail { mean, .. } => mean,
        }
    }

    fn sampler(&self) -> Result<VisitSampler> {
        let mean = self.mean();
        if !(mean >= 1.0) || !mean.is_finite() {
            return Err(Error::InvalidInput(format!("mean visits must be at least 1, got {mean}")));
        }
        match *self {
            Self::Poisson { mean } => Ok(VisitSampler::Poisson(if mean > 1.0 {
                Some(Poisson::new(mean - 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?)
            } else {
                None
            })),
            Self::HeavyTail { mean, exponent, cap } => {
                if cap < 2 {
                    return Err(Error::InvalidInput("visit cap must be at least 2".into()));
                }
                let weights: Vec<f64> = (2..=cap).map(|k| (k as f64).powf(-exponent)).collect();
                let total: f64 = weights.iter().sum();
                let tail_mean = (2..=cap).zip(&weights).map(|(k, w)| k as f64 * w).sum::<f64>() / total;
                let q = (mean - 1.0) / (tail_mean - 1.0);
                if q > 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "mean visits {mean} exceeds the tail mean {tail_mean:.2}"
                    )));
                }
                let index = WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
                Ok(VisitSampler::Tail { q, index })
            }
        }
    }
}

enum VisitSampler {
    Poisson(Option<Poisson<f64>>),
    Tail { q: f64, index: WeightedIndex<f64> },
}

impl VisitSampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Self::Poisson(None) => 1,
            Self::Poisson(Some(p)) => 1 + p.sample(rng) as usize,
            Self::Tail { q, index } => {
                if rng.random::<f64>() < *q {
                    2 + index.sample(rng)
                } else {
                    1
                }
            }
        }
    }
}

/// Site and checklist covariate law. Continuous covariates are iid standard
/// normal; the last `env_indicators` environment columns are instead
/// Bernoulli(`indicator_prob`). The first observation column is the
/// intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovariateLaw {
    pub env_indicators: usize,
    pub indicator_prob: f64,
}

impl Default for CovariateLaw {
    fn default() -> Self {
        Self {
            env_indicators: 0,
            indicator_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    /// Raw tables as they would be read from disk (no intercept column).
    pub dataset: Dataset,
    /// `N × D_env` design used for simulation.
    pub env: Array2<f64>,
    /// `K × D_obs` design used for simulation, intercept first.
    pub obs: Array2<f64>,
    /// True presence, `N × J`.
    pub truth_y: Array2<u8>,
    pub params: ParameterSet,
    pub layout: Layout,
}

pub fn env_column_names(d_env: usize) -> Vec<String> {
    (1..=d_env).map(|d| format!("x{d}")).collect()
}

/// `intercept, w1, w2, …`
pub fn obs_column_names(d_obs: usize) -> Vec<String> {
    std::iter::once("intercept".to_owned())
        .chain((1..d_obs).map(|l| format!("w{l}")))
        .collect()
}

pub fn species_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|j| format!("sp{j:0width$}")).collect()
}

pub fn simulate_dataset(
    params: &ParameterSet,
    n_sites: usize,
    visits: VisitLaw,
    covariates: CovariateLaw,
    seed: u64,
) -> Result<SimulatedDataset> {
    let dims = params.dims();
    let Dims {
        n_species, d_env, d_obs,
    } = dims;
    if d_obs == 0 {
        return Err(Error::InvalidInput("detection design needs an intercept column".into()));
    }
    if covariates.env_indicators > d_env {
        return Err(Error::InvalidInput("more indicators than environment columns".into()));
    }
    let sampler = visits.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_indicator = d_env - covariates.env_indicators;
    let env = Array2::from_shape_fn((n_sites, d_env), |(_, d)| {
        if d >= first_indicator {
            f64::from(u8::from(rng.random::<f64>() < covariates.indicator_prob))
        } else {
            rng.sample(StandardNormal)
        }
    });
    let mut site_of_checklist: Vec<usize> = Vec::new();
    for i in 0..n_sites {
        let k = sampler.draw(&mut rng);
        site_of_checklist.extend(std::iter::repeat_n(i, k));
    }
    site_of_checklist.shuffle(&mut rng);
    let k = site_of_checklist.len();
    let obs = Array2::from_shape_fn((k, d_obs), |(_, l)| if l == 0 { 1.0 } else { rng.sample(StandardNormal) });

    let psi = model::psi(params, &env)?;
    let p = model::detection_prob(params, &obs)?;
    let truth_y = Array2::from_shape_fn((n_sites, n_species), |(i, j)| u8::from(rng.random::<f64>() < psi[[i, j]]));
    let mut pairs = Vec::new();
    for (c, &i) in site_of_checklist.iter().enumerate() {
        for j in 0..n_species {
            let detected = rng.random::<f64>() < p[[c, j]];
            if truth_y[[i, j]] == 1 && detected {
                pairs.push((c, j));
            }
        }
    }

    let names = species_names(n_species);
    let env_cols = env_column_names(d_env);
    let obs_cols = obs_column_names(d_obs);
    let detections = DetectionStore::from_pairs(names.clone(), site_of_checklist.clone(), pairs)?;
    let sites = SiteTable {
        site_ids: (0..n_sites).map(|i| format!("site{i}")).collect(),
        columns: env_cols.clone(),
        env_raw: env.clone(),
    };
    let checklists = ChecklistTable {
        checklist_ids: (0..k).map(|c| format!("chk{c}")).collect(),
        site_index: site_of_checklist,
        columns: obs_cols[1..].to_vec(),
        obs_raw: obs.slice(ndarray::s![.., 1..]).to_owned(),
    };
    Ok(SimulatedDataset {
        dataset: Dataset {
            sites,
            checklists,
            detections,
        },
        env,
        obs,
        truth_y,
        params: params.clone(),
        layout: Layout::new(names, env_cols, obs_cols),
    })
}

impl SimulatedDataset {
    pub fn n_sites(&self) -> usize {
        self.env.nrows()
    }

    pub fn n_checklists(&self) -> usize {
        self.obs.nrows()
    }

    pub fn detections(&self) -> &DetectionStore {
        &self.dataset.detections
    }

    /// Likelihood-ready data on the simulation designs.
    pub fn occupancy_data(&self) -> Result<OccupancyData> {
        OccupancyData::new(&self.env, &self.obs, &self.dataset.detections)
    }

    /// True occupancy probabilities, `N × J`.
    pub fn true_psi(&self) -> Array2<f64> {
        model::psi(&self.params, &self.env).expect("dimensions fixed at simulation")
    }

    /// Partitions sites (with their checklists) into `(train, test)`.
    pub fn split_sites(&self, is_test: &[bool]) -> Result<(Self, Self)> {
        if is_test.len() != self.n_sites() {
            return Err(Error::DimensionMismatch("split mask length".into()));
        }
        Ok((self.subset(|i| !is_test[i])?, self.subset(|i| is_test[i])?))
    }

    fn subset(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let sites: Vec<usize> = (0..self.n_sites()).filter(|&i| keep(i)).collect();
        let mut new_index = vec![usize::MAX; self.n_sites()];
        for (new, &old) in sites.iter().enumerate() {
            new_index[old] = new;
        }
        let checklists: Vec<usize> = (0..self.n_checklists())
            .filter(|&c| keep(self.dataset.checklists.site_index[c]))
            .collect();
        let mut new_chk = vec![usize::MAX; self.n_checklists()];
        for (new, &old) in checklists.iter().enumerate() {
            new_chk[old] = new;
        }
        let site_of: Vec<usize> = checklists
            .iter()
            .map(|&c| new_index[self.dataset.checklists.site_index[c]])
            .collect();
        let pairs = self
            .dataset
            .detections
            .to_pairs()
            .into_iter()
            .filter(|&(c, _)| new_chk[c] != usize::MAX)
            .map(|(c, j)| (new_chk[c], j));
        let detections =
            DetectionStore::from_pairs(self.dataset.detections.species_names.clone(), site_of.clone(), pairs)?;
        let env = self.env.select(ndarray::Axis(0), &sites);
        let obs = self.obs.select(ndarray::Axis(0), &checklists);
        let old_sites = &self.dataset.sites;
        let old_chk = &self.dataset.checklists;
        Ok(Self {
            dataset: Dataset {
                sites: SiteTable {
                    site_ids: sites.iter().map(|&i| old_sites.site_ids[i].clone()).collect(),
                    columns: old_sites.columns.clone(),
                    env_raw: old_sites.env_raw.select(ndarray::Axis(0), &sites),
                },
                checklists: ChecklistTable {
                    checklist_ids: checklists.iter().map(|&c| old_chk.checklist_ids[c].clone()).collect(),
                    site_index: site_of,
                    columns: old_chk.columns.clone(),
                    obs_raw: old_chk.obs_raw.select(ndarray::Axis(0), &checklists),
                },
                detections,
            },
            env,
            obs,
            truth_y: self.truth_y.select(ndarray::Axis(0), &sites),
            params: self.params.clone(),
            layout: self.layout.clone(),
        })
    }

    /// Writes `sites.csv`, `checklists.csv`, `detections.csv` (detections
    /// only), `species.csv`, `truth_y.csv` and `truth_params.csv`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| -> Result<(csv::Writer<BufWriter<File>>, std::path::PathBuf)> {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            Ok((csv::Writer::from_writer(BufWriter::new(f)), path))
        };
        let ds = &self.dataset;

        let (mut w, path) = open("sites.csv")?;
        let wrap = |p: &Path| {
            let p = p.to_owned();
            move |e: csv::Error| Error::csv(&p, e)
        };
        let mut header = vec!["site_id".to_owned()];
        header.extend(ds.sites.columns.iter().cloned());
        w.write_record(&header).map_err(wrap(&path))?;
        for (i, id) in ds.sites.site_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(ds.sites.env_raw.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(wrap(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let (mut w, path) = open("checklists.csv")?;
        let mut header = vec!["checklist_id".to_owned(), "site_id".to_owned()];
        header.extend(ds.checklists.columns.iter().cloned());
        w.write_record(&header).map_err(wrap(&path))?;
        for (c, id) in ds.checklists.checklist_ids.iter().enumerate() {
            let mut row = vec![id.clone(), ds.sites.site_ids[ds.checklists.site_index[c]].clone()];
            row.extend(ds.checklists.obs_raw.row(c).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(wrap(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let (mut w, path) = open("detections.csv")?;
        w.write_record(["checklist_id", "species", "detected"]).map_err(wrap(&path))?;
        let mut pairs = ds.detections.to_pairs();
        pairs.sort_unstable();
        for (c, j) in pairs {
            w.write_record([
                ds.checklists.checklist_ids[c].as_str(),
                ds.detections.species_names[j].as_str(),
                "1",
            ])
            .map_err(wrap(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let (mut w, path) = open("species.csv")?;
        w.write_record(["species"]).map_err(wrap(&path))?;
        for s in &ds.detections.species_names {
            w.write_record([s]).map_err(wrap(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let (mut w, path) = open("truth_y.csv")?;
        w.write_record(["site_id", "species", "y"]).map_err(wrap(&path))?;
        for (i, id) in ds.sites.site_ids.iter().enumerate() {
            for (j, s) in ds.detections.species_names.iter().enumerate() {
                w.write_record([id.as_str(), s.as_str(), &self.truth_y[[i, j]].to_string()])
                    .map_err(wrap(&path))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("truth_params.csv");
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.params.write_csv(&self.layout, BufWriter::new(f))
    }
}

const ORACLE_MAX_SITES: usize = 12;
const ORACLE_MAX_SPECIES: usize = 4;
const ORACLE_MAX_VISITS: usize = 6;

/// Observed-data log likelihood by explicit summation over presence, in
/// linear arithmetic, for tiny datasets.
pub fn oracle_log_likelihood(
    params: &ParameterSet,
    env: &Array2<f64>,
    obs: &Array2<f64>,
    store: &DetectionStore,
) -> Result<f64> {
    let n = env.nrows();
    let j_count = store.n_species();
    let mut visits = vec![Vec::new(); n];
    for (c, &i) in store.site_of_checklist.iter().enumerate() {
        if i >= n {
            return Err(Error::DanglingReference(format!("site index {i}")));
        }
        visits[i].push(c);
    }
    if n > ORACLE_MAX_SITES
        || j_count > ORACLE_MAX_SPECIES
        || visits.iter().any(|v| v.len() > ORACLE_MAX_VISITS)
    {
        return Err(Error::InvalidInput("oracle is limited to tiny datasets".into()));
    }
    if params.dims().n_species != j_count {
        return Err(Error::DimensionMismatch("species count".into()));
    }
    let psi = model::psi(params, env)?;
    let p = model::detection_prob(params, obs)?;
    let mut total = 0.0;
    for j in 0..j_count {
        let detected = &store.detections[j];
        for (i, ks) in visits.iter().enumerate() {
            if ks.is_empty() {
                continue;
            }
            let mut present = psi[[i, j]];
            let mut any = false;
            for &k in ks {
                let s = detected.binary_search(&(k as u32)).is_ok();
                any |= s;
                present *= if s { p[[k, j]] } else { 1.0 - p[[k, j]] };
            }
            let absent = if any { 0.0 } else { 1.0 - psi[[i, j]] };
            total += (present + absent).ln();
        }
    }
    Ok(total)
}
