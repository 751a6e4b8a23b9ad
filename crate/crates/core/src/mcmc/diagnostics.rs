//! Convergence diagnostics: rank-normalized split-R̂ and bulk ESS.

use ndarray::{ArrayView2, ArrayView3, Axis};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
}

/// Splits each chain in half (dropping the middle draw for odd lengths).
fn split_chains(draws: ArrayView2<f64>) -> Vec<Vec<f64>> {
    let n = draws.ncols();
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * draws.nrows());
    for chain in draws.outer_iter() {
        out.push(chain.iter().take(half).copied().collect());
        out.push(chain.iter().skip(n - half).copied().collect());
    }
    out
}

/// Replaces every draw by `Φ⁻¹((r − 3/8)/(S + 1/4))` of its pooled average rank.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut flat: Vec<(f64, usize)> = chains.iter().flatten().copied().zip(0..).collect();
    flat.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = flat.len();
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && flat[j + 1].0 == flat[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[flat[k].1] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut it = ranks.into_iter().map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)));
    chains.iter().map(|c| it.by_ref().take(c.len()).collect()).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic R̂ over equal-length chains; NaN when all within-chain variances vanish.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b_over_n = sample_var(&means);
    if !(w > 0.0) {
        return f64::NAN;
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size with Geyer's initial-positive-sequence truncation
/// and monotone smoothing.
fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let mean_acov = |lag: usize| chains.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m as f64;
    let acov0: Vec<f64> = chains.iter().map(|c| autocovariance(c, 0)).collect();
    let chain_var = mean(&acov0) * n as f64 / (n as f64 - 1.0);
    let mut var_plus = chain_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += sample_var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |lag: usize| 1.0 - (chain_var - mean_acov(lag)) / var_plus;
    let mut rho_hat = vec![0.0; n + 1];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 5 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t + 1] = even;
    }
    let mut t = 1;
    while t + 3 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = (-1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1]).max(1.0 / total.log10());
    total / tau
}

/// Summary of one parameter from a `chains × draws` matrix.
pub fn summarize_parameter(draws: ArrayView2<f64>) -> Result<ParamSummary> {
    let half = draws.ncols() / 2;
    if half < 4 {
        return Err(Error::TooFewDraws(half));
    }
    let all: Vec<f64> = draws.iter().copied().collect();
    let mu = mean(&all);
    let sd = sample_var(&all).sqrt();
    let split = split_chains(draws);
    let bulk = rank_normalize(&split);
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let folded: Vec<Vec<f64>> = split.iter().map(|c| c.iter().map(|v| (v - median).abs()).collect()).collect();
    if rhat_basic(&split).is_nan() {
        return Ok(ParamSummary {
            mean: mu,
            sd,
            rhat: f64::NAN,
            ess_bulk: f64::NAN,
        });
    }
    let rhat = rhat_basic(&bulk).max(rhat_basic(&rank_normalize(&folded)));
    Ok(ParamSummary {
        mean: mu,
        sd,
        rhat,
        ess_bulk: ess(&bulk),
    })
}

/// Per-parameter table from `chains × draws × P` samples. Constant
/// parameters get NaN R̂ and ESS and a logged warning.
pub fn summarize_draws(draws: ArrayView3<f64>) -> Result<Vec<ParamSummary>> {
    let p = draws.len_of(Axis(2));
    let mut out = Vec::with_capacity(p);
    for k in 0..p {
        let s = summarize_parameter(draws.index_axis(Axis(2), k))?;
        if s.rhat.is_nan() {
            log::warn!("parameter {k}: zero within-chain variance, R-hat undefined");
        }
        out.push(s);
    }
    Ok(out)
}
