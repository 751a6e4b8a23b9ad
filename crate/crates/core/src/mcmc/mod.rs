//! Adaptive Hamiltonian Monte Carlo (multinomial NUTS, diagonal metric).
//!
//! Every chain draws its initial point uniformly from `[−2, 2]^P`, adapts
//! during warmup, and then samples with a frozen step size and metric.
//! Chains run in parallel. Each chain uses its own ChaCha stream,
//! `(seed, chain)`, so results do not depend on scheduling.

pub mod adapt;
pub mod diagnostics;
pub mod nuts;

use std::io::Write;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{summarize_draws, ParamSummary};
pub use nuts::{hamiltonian, leapfrog, PhasePoint};

use crate::density::LogDensity;
use crate::error::{Error, Result};
use adapt::{DualAveraging, RunningVariance, WarmupSchedule};
use nuts::Nuts;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HMCConfig {
    pub warmup_iters: usize,
    pub sample_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub chains: usize,
}

impl Default for HMCConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            sample_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            chains: 4,
        }
    }
}

impl HMCConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidInput("target_accept must lie in (0, 1)".into()));
        }
        if self.chains == 0 || self.sample_iters == 0 || self.max_tree_depth == 0 {
            return Err(Error::InvalidInput(
                "chains, sample_iters and max_tree_depth must be positive".into(),
            ));
        }
        if self.warmup_iters < 100 {
            log::warn!("warmup of {} iterations is short; adaptation may be poor", self.warmup_iters);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainResult {
    /// `chains × sample_iters × P`, unconstrained scale.
    pub draws: Array3<f64>,
    /// Mean acceptance statistic over post-warmup transitions.
    pub accept_rate: f64,
    pub divergence_count: usize,
    /// Adapted step size of each chain.
    pub step_size: Vec<f64>,
    /// Adapted inverse metric (posterior variance estimate) of each chain.
    pub mass_diag: Vec<Vec<f64>>,
    pub mean_tree_depth: f64,
    pub gradient_evaluations: usize,
}

impl ChainResult {
    pub fn n_chains(&self) -> usize {
        self.draws.shape()[0]
    }

    pub fn n_draws(&self) -> usize {
        self.draws.shape()[1]
    }

    pub fn dim(&self) -> usize {
        self.draws.shape()[2]
    }

    /// Pooled per-parameter mean over all chains and draws.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let n = (self.n_chains() * self.n_draws()) as f64;
        (0..self.dim())
            .map(|k| self.draws.index_axis(ndarray::Axis(2), k).sum() / n)
            .collect()
    }

    pub fn summarize(&self) -> Result<Vec<ParamSummary>> {
        summarize_draws(self.draws.view())
    }

    /// `chain,draw,<labels…>` with one row per draw.
    pub fn write_draws_csv<W: Write>(&self, labels: &[String], writer: W) -> Result<()> {
        if labels.len() != self.dim() {
            return Err(Error::DimensionMismatch("draw labels".into()));
        }
        let wrap = |e: csv::Error| Error::csv("draws", e);
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<&str> = ["chain", "draw"].into_iter().chain(labels.iter().map(String::as_str)).collect();
        w.write_record(&header).map_err(wrap)?;
        for c in 0..self.n_chains() {
            for i in 0..self.n_draws() {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(self.draws.slice(ndarray::s![c, i, ..]).iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(wrap)?;
            }
        }
        w.flush().map_err(|e| Error::io("draws", e))?;
        Ok(())
    }
}

struct ChainOutput {
    draws: Vec<f64>,
    accept_sum: f64,
    divergences: usize,
    depth_sum: usize,
    leapfrogs: usize,
    step_size: f64,
    inv_mass: Vec<f64>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<T: LogDensity + ?Sized>(target: &T, rng: &mut ChaCha8Rng) -> Result<PhasePoint> {
    for _ in 0..100 {
        let x: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let point = PhasePoint::new(target, x);
        if point.is_finite() {
            return Ok(point);
        }
    }
    Err(Error::NonFiniteGradient(
        "no finite initial point found in 100 attempts on [-2, 2]".into(),
    ))
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &HMCConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain);
    let dim = target.dim();
    let mut current = initial_point(target, &mut rng)?;
    let mut sampler = Nuts {
        target,
        inv_mass: vec![1.0; dim],
        step_size: 1.0,
        max_depth: config.max_tree_depth,
    };
    sampler.find_reasonable_step_size(&current, &mut rng);
    let mut dual = DualAveraging::new(config.target_accept, sampler.step_size);
    let schedule = WarmupSchedule::new(config.warmup_iters);
    let mut window = RunningVariance::new(dim);

    for iter in 0..config.warmup_iters {
        let t = sampler.transition(&current, &mut rng);
        current = t.point;
        sampler.step_size = dual.update(t.accept_stat);
        if schedule.in_slow_phase(iter) {
            window.push(&current.x);
            if schedule.closes_window(iter) {
                sampler.inv_mass = window.regularized();
                window = RunningVariance::new(dim);
                sampler.find_reasonable_step_size(&current, &mut rng);
                dual = DualAveraging::new(config.target_accept, sampler.step_size);
            }
        }
    }
    if config.warmup_iters > 0 {
        sampler.step_size = dual.final_step_size();
    }

    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.sample_iters * dim),
        accept_sum: 0.0,
        divergences: 0,
        depth_sum: 0,
        leapfrogs: 0,
        step_size: sampler.step_size,
        inv_mass: sampler.inv_mass.clone(),
    };
    for _ in 0..config.sample_iters {
        let t = sampler.transition(&current, &mut rng);
        current = t.point;
        out.accept_sum += t.accept_stat;
        out.divergences += usize::from(t.divergent);
        out.depth_sum += t.depth;
        out.leapfrogs += t.n_leapfrog;
        out.draws.extend_from_slice(&current.x);
    }
    Ok(out)
}

/// Runs `config.chains` NUTS chains on `target`.
///
/// Fails with [`Error::AllDivergent`] when more than half of the
/// post-warmup transitions diverged.
pub fn sample_mcmc<T: LogDensity + ?Sized>(target: &T, config: &HMCConfig) -> Result<ChainResult> {
    config.validate()?;
    let dim = target.dim();
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c))
        .collect::<Result<_>>()?;
    let total = config.chains * config.sample_iters;
    let divergent: usize = outputs.iter().map(|o| o.divergences).sum();
    if 2 * divergent > total {
        return Err(Error::AllDivergent { divergent, total });
    }
    if divergent > 0 {
        log::warn!("{divergent} of {total} post-warmup transitions diverged");
    }
    let mut flat = Vec::with_capacity(total * dim);
    for o in &outputs {
        flat.extend_from_slice(&o.draws);
    }
    let draws = Array3::from_shape_vec((config.chains, config.sample_iters, dim), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient("non-finite draw recorded".into()));
    }
    Ok(ChainResult {
        draws,
        accept_rate: outputs.iter().map(|o| o.accept_sum).sum::<f64>() / total as f64,
        divergence_count: divergent,
        step_size: outputs.iter().map(|o| o.step_size).collect(),
        mass_diag: outputs.iter().map(|o| o.inv_mass.clone()).collect(),
        mean_tree_depth: outputs.iter().map(|o| o.depth_sum).sum::<usize>() as f64 / total as f64,
        gradient_evaluations: outputs.iter().map(|o| o.leapfrogs).sum(),
    })
}
