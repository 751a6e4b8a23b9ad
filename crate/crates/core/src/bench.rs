//! Runtime scaling of the sparse likelihood and the per-species MLE.
//!
//! Datasets with skewed visit counts are simulated at a ladder of checklist
//! counts. Likelihood evaluation and MLE fitting are timed on one thread,
//! and log-log slopes of runtime against `K` are reported. A second check
//! moves checklists onto the busiest site until its visit count is
//! multiplied, holding `K` fixed. A padded `N × K_max` layout would grow
//! with that count, but the sparse one does not.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::DetectionStore;
use crate::error::{Error, Result};
use crate::mle::{self, MleConfig};
use crate::model::{Dims, OccupancyData, ParameterSet};
use crate::simulate::{self, CovariateLaw, SimulatedDataset, VisitLaw};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub n_species: usize,
    pub d_env: usize,
    pub d_obs: usize,
    pub mean_visits: f64,
    pub repeats: usize,
    pub seed: u64,
    /// Multiplier applied to the busiest site's visits in the skew check.
    pub inflation: usize,
    /// `K` for the skew check; defaults to the median size.
    pub skew_size: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: (0..7).map(|e| 1000 << e).collect(),
            n_species: 8,
            d_env: 3,
            d_obs: 3,
            mean_visits: 3.0,
            repeats: 5,
            seed: 0,
            inflation: 10,
            skew_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub target_checklists: usize,
    pub checklists: usize,
    pub sites: usize,
    pub max_visits: usize,
    pub sparse_bytes: usize,
    pub padded_cells: usize,
    pub likelihood_secs: f64,
    pub mle_secs: f64,
    pub mle_evaluations: usize,
    pub mle_secs_per_evaluation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkewCheck {
    pub checklists: usize,
    pub base_max_visits: usize,
    pub inflated_max_visits: usize,
    pub base_padded_cells: usize,
    pub inflated_padded_cells: usize,
    /// `inflated / base` runtime.
    pub likelihood_ratio: f64,
    pub mle_ratio: f64,
    pub mle_per_evaluation_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    pub likelihood_slope: f64,
    pub mle_slope: f64,
    pub mle_per_evaluation_slope: f64,
    pub skew: SkewCheck,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn bench_params(config: &BenchConfig) -> Result<ParameterSet> {
    let dims = Dims::new(config.n_species, config.d_env, config.d_obs);
    simulate::sample_params(dims, config.seed, None)
}

fn dataset_for(config: &BenchConfig, params: &ParameterSet, k: usize, seed: u64) -> Result<SimulatedDataset> {
    let n_sites = ((k as f64 / config.mean_visits).round() as usize).max(1);
    simulate::simulate_dataset(
        params,
        n_sites,
        VisitLaw::skewed(config.mean_visits),
        CovariateLaw::default(),
        seed,
    )
}

/// Minimum over `repeats` of the mean time per call, with enough calls per
/// measurement to last about 20 ms.
fn time_per_call(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let start = Instant::now();
    f()?;
    let once = start.elapsed().as_secs_f64().max(1e-7);
    let calls = ((0.02 / once).ceil() as usize).clamp(1, 10_000);
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for _ in 0..calls {
            f()?;
        }
        best = best.min(start.elapsed().as_secs_f64() / calls as f64);
    }
    Ok(best)
}

struct Timing {
    likelihood: f64,
    mle: f64,
    evaluations: usize,
}

fn time_dataset(data: &OccupancyData, params: &ParameterSet, repeats: usize) -> Result<Timing> {
    let likelihood = time_per_call(repeats, || data.log_likelihood_serial(params).map(|_| ()))?;
    let serial = MleConfig {
        parallel: false,
        ..MleConfig::default()
    };
    let mut mle = f64::INFINITY;
    let mut evaluations = 0;
    for _ in 0..repeats.clamp(1, 3) {
        let start = Instant::now();
        let report = mle::fit_all_mle(data, &serial)?;
        mle = mle.min(start.elapsed().as_secs_f64());
        evaluations = report.fits.iter().map(|f| f.evaluations).sum();
    }
    Ok(Timing {
        likelihood,
        mle,
        evaluations,
    })
}

fn max_visits(store: &DetectionStore, n_sites: usize) -> usize {
    let mut v = vec![0usize; n_sites];
    for &s in &store.site_of_checklist {
        v[s] += 1;
    }
    v.into_iter().max().unwrap_or(0)
}

/// Moves checklists onto the busiest site until it holds `factor` times its
/// visits. Donors are the least visited sites that can spare a checklist, and
/// every visited site keeps at least one, so `K`, the set of visited sites
/// and all detections are unchanged.
pub fn inflate_busiest_site(store: &DetectionStore, n_sites: usize, factor: usize) -> Result<DetectionStore> {
    let mut visits = vec![0usize; n_sites];
    for &s in &store.site_of_checklist {
        visits[s] += 1;
    }
    let busiest = (0..n_sites).max_by_key(|&i| visits[i]).ok_or(Error::InvalidInput("no sites".into()))?;
    let need = visits[busiest] * factor.saturating_sub(1);
    let mut seen = vec![false; n_sites];
    let mut donors: Vec<usize> = Vec::new();
    for (c, &s) in store.site_of_checklist.iter().enumerate() {
        if s != busiest && std::mem::replace(&mut seen[s], true) {
            donors.push(c);
        }
    }
    donors.sort_by_key(|&c| (visits[store.site_of_checklist[c]], c));
    if donors.len() < need {
        return Err(Error::InvalidInput("not enough checklists to inflate the busiest site".into()));
    }
    let mut site_of = store.site_of_checklist.clone();
    for &c in donors.iter().take(need) {
        site_of[c] = busiest;
    }
    DetectionStore::from_pairs(store.species_names.clone(), site_of, store.to_pairs())
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.sizes.len() < 2 {
        return Err(Error::InvalidInput("bench needs at least two sizes".into()));
    }
    let params = bench_params(config)?;
    let mut rows = Vec::with_capacity(config.sizes.len());
    for (s, &k) in config.sizes.iter().enumerate() {
        let sim = dataset_for(config, &params, k, config.seed.wrapping_add(1 + s as u64))?;
        let data = sim.occupancy_data()?;
        let t = time_dataset(&data, &params, config.repeats)?;
        let store = sim.detections();
        log::info!("bench K={}: likelihood {:.3e}s, MLE {:.3e}s", store.n_checklists(), t.likelihood, t.mle);
        rows.push(BenchRow {
            target_checklists: k,
            checklists: store.n_checklists(),
            sites: sim.n_sites(),
            max_visits: max_visits(store, sim.n_sites()),
            sparse_bytes: store.memory_bytes(),
            padded_cells: store.padded_cells(sim.n_sites()),
            likelihood_secs: t.likelihood,
            mle_secs: t.mle,
            mle_evaluations: t.evaluations,
            mle_secs_per_evaluation: t.mle / t.evaluations.max(1) as f64,
        });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.checklists as f64).collect();
    let slope = |f: fn(&BenchRow) -> f64| log_log_slope(&ks, &rows.iter().map(f).collect::<Vec<_>>());

    let mut sorted = config.sizes.clone();
    sorted.sort_unstable();
    let skew_k = config.skew_size.unwrap_or(sorted[sorted.len() / 2]);
    let sim = dataset_for(config, &params, skew_k, config.seed.wrapping_add(1000))?;
    let base_store = sim.detections().clone();
    let inflated_store = inflate_busiest_site(&base_store, sim.n_sites(), config.inflation)?;
    let base = time_dataset(&OccupancyData::new(&sim.env, &sim.obs, &base_store)?, &params, config.repeats)?;
    let inflated = time_dataset(&OccupancyData::new(&sim.env, &sim.obs, &inflated_store)?, &params, config.repeats)?;
    let per_eval = |t: &Timing| t.mle / t.evaluations.max(1) as f64;
    let skew = SkewCheck {
        checklists: base_store.n_checklists(),
        base_max_visits: max_visits(&base_store, sim.n_sites()),
        inflated_max_visits: max_visits(&inflated_store, sim.n_sites()),
        base_padded_cells: base_store.padded_cells(sim.n_sites()),
        inflated_padded_cells: inflated_store.padded_cells(sim.n_sites()),
        likelihood_ratio: inflated.likelihood / base.likelihood,
        mle_ratio: inflated.mle / base.mle,
        mle_per_evaluation_ratio: per_eval(&inflated) / per_eval(&base),
    };
    Ok(BenchReport {
        likelihood_slope: slope(|r| r.likelihood_secs),
        mle_slope: slope(|r| r.mle_secs),
        mle_per_evaluation_slope: slope(|r| r.mle_secs_per_evaluation),
        config: config.clone(),
        rows,
        skew,
    })
}
