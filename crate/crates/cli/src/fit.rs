use std::path::Path;
use std::time::Instant;

use occu::data::{self, build_design};
use occu::mcmc::{self, ParamSummary};
use occu::mle;
use occu::model::{OccupancyData, OccupancyPosterior};
use occu::vi;
use serde::Serialize;

use crate::artifacts::{self, FitDesign, Manifest};
use crate::config::{load_json, FitConfig, Method};
use crate::error::{CliError, Result};

/// R̂ above which an MCMC run is reported as unconverged.
pub const RHAT_LIMIT: f64 = 1.05;

#[derive(Debug, Serialize)]
struct McmcDiagnostics {
    converged: bool,
    max_rhat: f64,
    min_ess_bulk: f64,
    accept_rate: f64,
    divergence_count: usize,
    step_size: Vec<f64>,
    mean_tree_depth: f64,
    gradient_evaluations: usize,
    wall_time_secs: f64,
}

#[derive(Debug, Serialize)]
struct MleSpeciesDiagnostics {
    species: String,
    converged: bool,
    iterations: usize,
    evaluations: usize,
    final_neg_loglik: f64,
}

#[derive(Debug, Serialize)]
struct MleDiagnostics {
    converged: bool,
    fits: Vec<MleSpeciesDiagnostics>,
    skipped: Vec<String>,
    wall_time_secs: f64,
}

pub struct FitArgs<'a> {
    pub config: &'a Path,
    pub seed: Option<u64>,
    pub out_dir: Option<&'a Path>,
}

pub fn run(args: FitArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: FitConfig = load_json(args.config)?;
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let mut cfg = cfg.resolve(base);
    if let Some(dir) = args.out_dir {
        cfg.output_dir = dir.to_owned();
    }
    cfg.validate(args.config)?;

    let ds = data::load_dataset(
        &cfg.data.sites,
        &cfg.data.checklists,
        &cfg.data.detections,
        cfg.data.species.as_deref(),
    )?;
    let store = data::filter_rare_species(&ds.detections, cfg.min_detections)?;
    if store.n_species() < ds.detections.n_species() {
        log::info!(
            "kept {} of {} species with at least {} detections",
            store.n_species(),
            ds.detections.n_species(),
            cfg.min_detections
        );
    }
    let env = build_design(&ds.sites.env_raw, &ds.sites.columns, &cfg.env_design)?;
    let obs = build_design(&ds.checklists.obs_raw, &ds.checklists.columns, &cfg.obs_design)?;
    let design = FitDesign {
        method: cfg.method,
        species: store.species_names.clone(),
        env: env.transform,
        obs: obs.transform,
    };
    let layout = design.layout();
    let obs_matrix = artifacts::with_intercept(&obs.matrix);
    let occ = OccupancyData::new(&env.matrix, &obs_matrix, &store)?;

    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| occu::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    artifacts::write_json(&out.join(artifacts::DESIGN_FILE), &design)?;

    let unconverged = match cfg.method {
        Method::Vi => {
            let post = OccupancyPosterior::new(occ, layout.clone())?;
            let (q, diag) = vi::fit_vi(&post, &cfg.vi, None)?;
            let mut w = artifacts::create(&out.join(artifacts::POSTERIOR_FILE))?;
            q.write_csv(&layout, &mut w)?;
            drop(w);
            artifacts::write_json(&out.join(artifacts::DIAGNOSTICS_FILE), &diag)?;
            (!diag.converged).then(|| {
                format!(
                    "VI did not converge in {} iterations (gradient inf-norm {:.3e})",
                    diag.iterations, diag.grad_inf_norm
                )
            })
        }
        Method::Mcmc => {
            let t = Instant::now();
            let post = OccupancyPosterior::new(occ, layout.clone())?;
            let chains = mcmc::sample_mcmc(&post, &cfg.mcmc)?;
            let labels = layout.labels();
            let mut w = artifacts::create(&out.join(artifacts::DRAWS_FILE))?;
            chains.write_draws_csv(&labels, &mut w)?;
            drop(w);
            let summary = chains.summarize()?;
            write_summary(&out.join(artifacts::SUMMARY_FILE), &labels, &summary)?;
            let max_rhat = summary.iter().map(|s| s.rhat).filter(|r| !r.is_nan()).fold(f64::NAN, f64::max);
            let min_ess = summary.iter().map(|s| s.ess_bulk).filter(|r| !r.is_nan()).fold(f64::NAN, f64::min);
            let converged = !(max_rhat > RHAT_LIMIT);
            let diag = McmcDiagnostics {
                converged,
                max_rhat,
                min_ess_bulk: min_ess,
                accept_rate: chains.accept_rate,
                divergence_count: chains.divergence_count,
                step_size: chains.step_size.clone(),
                mean_tree_depth: chains.mean_tree_depth,
                gradient_evaluations: chains.gradient_evaluations,
                wall_time_secs: t.elapsed().as_secs_f64(),
            };
            artifacts::write_json(&out.join(artifacts::DIAGNOSTICS_FILE), &diag)?;
            (!converged).then(|| format!("MCMC max R-hat {max_rhat:.3} exceeds {RHAT_LIMIT}"))
        }
        Method::Mle => {
            let t = Instant::now();
            let report = mle::fit_all_mle(&occ, &cfg.mle)?;
            let mut w = artifacts::create(&out.join(artifacts::MLE_FILE))?;
            report.write_csv(&layout, &mut w)?;
            drop(w);
            let failed: Vec<&str> = report
                .fits
                .iter()
                .filter(|f| !f.converged)
                .map(|f| f.species.as_str())
                .collect();
            let diag = MleDiagnostics {
                converged: failed.is_empty(),
                fits: report
                    .fits
                    .iter()
                    .map(|f| MleSpeciesDiagnostics {
                        species: f.species.clone(),
                        converged: f.converged,
                        iterations: f.iterations,
                        evaluations: f.evaluations,
                        final_neg_loglik: f.final_neg_loglik,
                    })
                    .collect(),
                skipped: report.skipped.clone(),
                wall_time_secs: t.elapsed().as_secs_f64(),
            };
            artifacts::write_json(&out.join(artifacts::DIAGNOSTICS_FILE), &diag)?;
            (!failed.is_empty()).then(|| format!("MLE did not converge for {}", failed.join(", ")))
        }
    };

    let resolved = serde_json::to_value(&cfg).map_err(|e| occu::Error::InvalidInput(e.to_string()))?;
    let mut manifest = Manifest::new("fit", resolved, Some(args.config))?;
    manifest.add_input(&cfg.data.sites)?;
    manifest.add_input(&cfg.data.checklists)?;
    manifest.add_input(&cfg.data.detections)?;
    if let Some(s) = &cfg.data.species {
        manifest.add_input(s)?;
    }
    manifest.add_artifacts(
        out,
        &[
            artifacts::DESIGN_FILE,
            artifacts::POSTERIOR_FILE,
            artifacts::DRAWS_FILE,
            artifacts::SUMMARY_FILE,
            artifacts::MLE_FILE,
        ],
    )?;
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    artifacts::write_json(&out.join(artifacts::MANIFEST_FILE), &manifest)?;
    log::info!("{} fit written to {}", cfg.method.name(), out.display());

    match unconverged {
        Some(msg) => Err(CliError::NotConverged(msg)),
        None => Ok(()),
    }
}

fn write_summary(path: &Path, labels: &[String], summary: &[ParamSummary]) -> Result<()> {
    let wrap = |e: csv::Error| occu::Error::Csv {
        path: path.to_owned(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(artifacts::create(path)?);
    w.write_record(["parameter", "mean", "sd", "rhat", "ess_bulk"]).map_err(wrap)?;
    for (label, s) in labels.iter().zip(summary) {
        w.write_record([
            label.clone(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.rhat.to_string(),
            s.ess_bulk.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| occu::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(())
}
