//! Mean-field Gaussian variational inference with a fixed set of draws.
//!
//! The KL objective (up to the log evidence) is
//!
//! ```text
//! L(m, log s) = −(1/M) Σ_m log p(θ(z_m)) − Σ_p (log s_p + ½ log 2πe),
//! θ(z) = exp(log s) ⊙ z + m,
//! ```
//!
//! with the draws `z_1..z_M` frozen for the whole optimization. The
//! objective is then an ordinary deterministic function of `(m, log s)` and
//! is minimized by trust-region Newton-CG. Hessian-vector products come from
//! the target's exact `H v` chained through the reparameterization.
//!
//! By default each parameter's column of draws is moment-matched (centred
//! and scaled to unit variance). On a Gaussian target the fixed-draw optimum
//! then coincides with the exact mean-field optimum.

use std::io::{Read, Write};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::model::Layout;
use crate::optim::trust_ncg::{self, SecondOrderObjective, TrustRegionConfig};

const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

pub const DEFAULT_INIT_LOG_SD: f64 = -std::f64::consts::LN_10; // ln 0.1

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldPosterior {
    pub mean: Vec<f64>,
    pub log_sd: Vec<f64>,
}

impl MeanFieldPosterior {
    /// `m = 0` (so `σ = 1` for the `ζ` block), `log s = log 0.1`.
    pub fn initial(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_sd: vec![DEFAULT_INIT_LOG_SD; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sd(&self) -> Vec<f64> {
        self.log_sd.iter().map(|v| v.exp()).collect()
    }

    /// `[m; log s]`
    pub fn to_eta(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.log_sd).copied().collect()
    }

    pub fn from_eta(eta: &[f64]) -> Self {
        let p = eta.len() / 2;
        Self {
            mean: eta[..p].to_vec(),
            log_sd: eta[p..].to_vec(),
        }
    }

    pub fn entropy(&self) -> f64 {
        self.log_sd.iter().map(|l| l + HALF_LN_2PI_E).sum()
    }

    /// `block,species,column,mean,sd` rows.
    pub fn write_csv<W: Write>(&self, layout: &Layout, writer: W) -> Result<()> {
        if layout.len() != self.dim() {
            return Err(Error::DimensionMismatch("layout does not match posterior".into()));
        }
        let wrap = |e: csv::Error| Error::csv("posterior", e);
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["block", "species", "column", "mean", "sd"]).map_err(wrap)?;
        for ((block, sp, col), (m, ls)) in layout.named_rows().into_iter().zip(self.mean.iter().zip(&self.log_sd)) {
            w.write_record([block, sp, col, &m.to_string(), &ls.exp().to_string()])
                .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("posterior", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<(Self, Layout)> {
        let wrap = |e: csv::Error| Error::csv("posterior", e);
        let mut r = csv::Reader::from_reader(reader);
        let mut names = Vec::new();
        let mut post = Self {
            mean: Vec::new(),
            log_sd: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec.map_err(wrap)?;
            if rec.len() != 5 {
                return Err(Error::InvalidInput("expected block,species,column,mean,sd".into()));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| Error::Parse {
                    path: "posterior".into(),
                    line: rec.position().map(|p| p.line()).unwrap_or(0),
                    value: rec[i].to_owned(),
                })
            };
            post.mean.push(num(3)?);
            post.log_sd.push(num(4)?.ln());
            names.push((rec[0].to_owned(), rec[1].to_owned(), rec[2].to_owned()));
        }
        let layout = Layout::from_named_rows(names.iter().map(|(b, s, c)| (b.as_str(), s.as_str(), c.as_str())))?;
        Ok((post, layout))
    }
}

/// Standard-normal draws `z`, `M × P`, frozen for one optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedDrawSet {
    z: Vec<f64>,
    n_draws: usize,
    dim: usize,
    pub seed: Option<u64>,
}

impl FixedDrawSet {
    pub fn generate(n_draws: usize, dim: usize, seed: u64, moment_match: bool) -> Self {
        assert!(n_draws >= 1, "need at least one draw");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z: Vec<f64> = (0..n_draws * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if moment_match {
            for p in 0..dim {
                let col = |m: usize| m * dim + p;
                let mean = (0..n_draws).map(|m| z[col(m)]).sum::<f64>() / n_draws as f64;
                for m in 0..n_draws {
                    z[col(m)] -= mean;
                }
                if n_draws >= 2 {
                    let var = (0..n_draws).map(|m| z[col(m)].powi(2)).sum::<f64>() / n_draws as f64;
                    if var > 0.0 {
                        let inv = var.sqrt().recip();
                        for m in 0..n_draws {
                            z[col(m)] *= inv;
                        }
                    }
                }
            }
        }
        Self {
            z,
            n_draws,
            dim,
            seed: Some(seed),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged draw rows");
        Self {
            z: rows.concat(),
            n_draws: rows.len(),
            dim,
            seed: None,
        }
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.z[m * self.dim..(m + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VIConfig {
    pub m_draws: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_trust_radius: f64,
    pub moment_match: bool,
}

impl Default for VIConfig {
    fn default() -> Self {
        Self {
            m_draws: 100,
            seed: 0,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            initial_trust_radius: 1.0,
            moment_match: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub final_objective: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub grad_inf_norm: f64,
    pub hvp_evaluations: usize,
    pub wall_time_secs: f64,
}

fn check_shapes<T: LogDensity + ?Sized>(target: &T, eta: &MeanFieldPosterior, draws: &FixedDrawSet) -> Result<()> {
    if eta.dim() != target.dim() || draws.dim() != target.dim() || eta.log_sd.len() != eta.dim() {
        return Err(Error::DimensionMismatch(format!(
            "target {} / posterior {} / draws {}",
            target.dim(),
            eta.dim(),
            draws.dim()
        )));
    }
    Ok(())
}

fn theta_at(eta: &MeanFieldPosterior, sd: &[f64], z: &[f64]) -> Vec<f64> {
    eta.mean.iter().zip(sd).zip(z).map(|((m, s), z)| s * z + m).collect()
}

fn first_nonfinite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

pub fn kl_objective<T: LogDensity + ?Sized>(target: &T, eta: &MeanFieldPosterior, draws: &FixedDrawSet) -> Result<f64> {
    check_shapes(target, eta, draws)?;
    let sd = eta.sd();
    let lps: Vec<f64> = (0..draws.n_draws())
        .into_par_iter()
        .map(|m| target.log_density(&theta_at(eta, &sd, draws.row(m))))
        .collect();
    if let Some(draw) = first_nonfinite(&lps) {
        return Err(Error::NonFiniteObjective { draw });
    }
    let mean_lp = lps.iter().sum::<f64>() / draws.n_draws() as f64;
    Ok(-mean_lp - eta.entropy())
}

/// Objective and its gradient `[∂/∂m; ∂/∂log s]`.
pub fn kl_value_and_gradient<T: LogDensity + ?Sized>(
    target: &T,
    eta: &MeanFieldPosterior,
    draws: &FixedDrawSet,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(target, eta, draws)?;
    let p = eta.dim();
    let sd = eta.sd();
    let per_draw: Vec<(f64, Vec<f64>)> = (0..draws.n_draws())
        .into_par_iter()
        .map(|m| {
            let theta = theta_at(eta, &sd, draws.row(m));
            let mut g = vec![0.0; p];
            let lp = target.log_density_and_grad(&theta, &mut g);
            (lp, g)
        })
        .collect();
    let inv_m = 1.0 / draws.n_draws() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; 2 * p];
    for (m, (lp, g)) in per_draw.iter().enumerate() {
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective { draw: m });
        }
        value += lp;
        let z = draws.row(m);
        for i in 0..p {
            grad[i] -= g[i];
            grad[p + i] -= g[i] * z[i] * sd[i];
        }
    }
    for v in grad.iter_mut() {
        *v *= inv_m;
    }
    for v in grad[p..].iter_mut() {
        *v -= 1.0;
    }
    Ok((-value * inv_m - eta.entropy(), grad))
}

pub fn kl_gradient<T: LogDensity + ?Sized>(target: &T, eta: &MeanFieldPosterior, draws: &FixedDrawSet) -> Result<Vec<f64>> {
    kl_value_and_gradient(target, eta, draws).map(|(_, g)| g)
}

/// Exact Hessian-vector product of the objective in `(m, log s)`.
///
/// With `dθ = v_m + s ⊙ z ⊙ v_s` and `g`, `H` the target's gradient and
/// Hessian at `θ(z)`:
/// `∂_m ← −mean(H dθ)`, `∂_s ← −mean(s ⊙ z ⊙ (H dθ + g ⊙ v_s))`.
pub fn kl_hessian_vector<T: LogDensity + ?Sized>(
    target: &T,
    eta: &MeanFieldPosterior,
    vec: &[f64],
    draws: &FixedDrawSet,
) -> Result<Vec<f64>> {
    check_shapes(target, eta, draws)?;
    let p = eta.dim();
    if vec.len() != 2 * p {
        return Err(Error::DimensionMismatch(format!("direction length {} != {}", vec.len(), 2 * p)));
    }
    if vec.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; 2 * p]);
    }
    let sd = eta.sd();
    let (vm, vs) = vec.split_at(p);
    let per_draw: Vec<(Vec<f64>, Vec<f64>)> = (0..draws.n_draws())
        .into_par_iter()
        .map(|m| {
            let z = draws.row(m);
            let theta = theta_at(eta, &sd, z);
            let dtheta: Vec<f64> = (0..p).map(|i| vm[i] + sd[i] * z[i] * vs[i]).collect();
            let mut g = vec![0.0; p];
            let mut hv = vec![0.0; p];
            target.grad_and_hessian_vector(&theta, &dtheta, &mut g, &mut hv);
            (g, hv)
        })
        .collect();
    let inv_m = 1.0 / draws.n_draws() as f64;
    let mut out = vec![0.0; 2 * p];
    for (m, (g, hv)) in per_draw.iter().enumerate() {
        if hv.iter().chain(g).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObjective { draw: m });
        }
        let z = draws.row(m);
        for i in 0..p {
            out[i] -= hv[i];
            out[p + i] -= sd[i] * z[i] * (hv[i] + g[i] * vs[i]);
        }
    }
    for v in out.iter_mut() {
        *v *= inv_m;
    }
    Ok(out)
}

struct KlProblem<'a, T: ?Sized> {
    target: &'a T,
    draws: &'a FixedDrawSet,
}

impl<T: LogDensity + ?Sized> SecondOrderObjective for KlProblem<'_, T> {
    fn dim(&self) -> usize {
        2 * self.target.dim()
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        kl_value_and_gradient(self.target, &MeanFieldPosterior::from_eta(x), self.draws)
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        kl_hessian_vector(self.target, &MeanFieldPosterior::from_eta(x), v, self.draws)
    }
}

/// Minimizes the fixed-draw KL objective. Running out of iterations is not
/// an error: the best iterate is returned with `converged = false`.
pub fn fit_vi<T: LogDensity + ?Sized>(
    target: &T,
    config: &VIConfig,
    init: Option<MeanFieldPosterior>,
) -> Result<(MeanFieldPosterior, FitDiagnostics)> {
    if config.m_draws == 0 {
        return Err(Error::InvalidInput("m_draws must be at least 1".into()));
    }
    let start = Instant::now();
    let dim = target.dim();
    let init = init.unwrap_or_else(|| MeanFieldPosterior::initial(dim));
    let draws = FixedDrawSet::generate(config.m_draws, dim, config.seed, config.moment_match);
    check_shapes(target, &init, &draws)?;
    let problem = KlProblem {
        target,
        draws: &draws,
    };
    let tr = TrustRegionConfig {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        initial_radius: config.initial_trust_radius,
        ..TrustRegionConfig::default()
    };
    let result = trust_ncg::minimize(&problem, init.to_eta(), &tr)?;
    if !result.converged {
        log::warn!(
            "VI stopped after {} iterations with gradient inf-norm {:.3e}",
            result.iterations,
            result.grad_inf_norm
        );
    }
    let diagnostics = FitDiagnostics {
        iterations: result.iterations,
        final_objective: result.value,
        objective_trace: result.trace,
        converged: result.converged,
        grad_inf_norm: result.grad_inf_norm,
        hvp_evaluations: result.hvp_count,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((MeanFieldPosterior::from_eta(&result.x), diagnostics))
}

/// `n` independent draws `θ = exp(log s) ⊙ z + m`, one per row.
pub fn sample_posterior(post: &MeanFieldPosterior, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = post.sd();
    let p = post.dim();
    Array2::from_shape_fn((n, p), |(_, i)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        post.mean[i] + sd[i] * z
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{DiagGaussian, Flat};

    #[test]
    fn entropy_only_objective() {
        let draws = FixedDrawSet::from_rows(&[vec![0.0]]);
        let eta = MeanFieldPosterior {
            mean: vec![0.0],
            log_sd: vec![0.0],
        };
        let v = kl_objective(&Flat(1), &eta, &draws).unwrap();
        assert!((v + 1.418939).abs() < 1e-6);
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()).abs() < 1e-15);
    }

    #[test]
    fn shifting_log_sd_moves_entropy_exactly() {
        let p = 4;
        let draws = FixedDrawSet::generate(3, p, 1, false);
        let eta = MeanFieldPosterior {
            mean: vec![0.1; p],
            log_sd: vec![-0.3; p],
        };
        let shifted = MeanFieldPosterior {
            log_sd: eta.log_sd.iter().map(|l| l + 2f64.ln()).collect(),
            ..eta.clone()
        };
        let a = kl_objective(&Flat(p), &eta, &draws).unwrap();
        let b = kl_objective(&Flat(p), &shifted, &draws).unwrap();
        assert!((a - b - p as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_gradient_is_minus_one() {
        let draws = FixedDrawSet::generate(5, 3, 2, true);
        let g = kl_gradient(&Flat(3), &MeanFieldPosterior::initial(3), &draws).unwrap();
        assert_eq!(&g[..3], &[0.0; 3]);
        assert_eq!(&g[3..], &[-1.0; 3]);
    }

    #[test]
    fn zero_direction_gives_zero() {
        let t = DiagGaussian {
            mean: vec![1.0, 2.0],
            sd: vec![1.0, 0.5],
        };
        let draws = FixedDrawSet::generate(4, 2, 0, true);
        let hv = kl_hessian_vector(&t, &MeanFieldPosterior::initial(2), &[0.0; 4], &draws).unwrap();
        assert_eq!(hv, vec![0.0; 4]);
    }

    #[test]
    fn moment_matched_columns_are_standardized() {
        let d = FixedDrawSet::generate(50, 3, 9, true);
        for p in 0..3 {
            let col: Vec<f64> = (0..50).map(|m| d.row(m)[p]).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-14 && (var - 1.0).abs() < 1e-12);
        }
        assert_eq!(d, FixedDrawSet::generate(50, 3, 9, true));
    }

    #[test]
    fn nonfinite_draw_is_named() {
        struct Bad;
        impl LogDensity for Bad {
            fn dim(&self) -> usize {
                1
            }
            fn log_density_and_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
                g[0] = 0.0;
                if x[0] > 0.5 {
                    f64::NAN
                } else {
                    0.0
                }
            }
        }
        let draws = FixedDrawSet::from_rows(&[vec![0.0], vec![1.0]]);
        let eta = MeanFieldPosterior {
            mean: vec![0.0],
            log_sd: vec![0.0],
        };
        assert!(matches!(
            kl_objective(&Bad, &eta, &draws),
            Err(Error::NonFiniteObjective { draw: 1 })
        ));
    }

    #[test]
    fn posterior_csv_round_trip() {
        let layout = Layout::anonymous(crate::model::Dims::new(1, 1, 1));
        let post = MeanFieldPosterior {
            mean: (0..layout.len()).map(|i| i as f64 - 1.5).collect(),
            log_sd: (0..layout.len()).map(|i| -(i as f64) * 0.5).collect(),
        };
        let mut buf = Vec::new();
        post.write_csv(&layout, &mut buf).unwrap();
        let (back, l2) = MeanFieldPosterior::read_csv(buf.as_slice()).unwrap();
        assert_eq!(l2, layout);
        for (a, b) in back.log_sd.iter().zip(&post.log_sd) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(back.mean, post.mean);
    }
}
