use std::path::Path;

use ndarray::Array2;
use occu::data::{load_checklists, load_sites};
use occu::eval::{self, draws_to_params};
use occu::mle::MleReport;
use occu::model::{Layout, ParameterSet};
use occu::vi::{self, MeanFieldPosterior};

use crate::artifacts::{self, FitDesign};
use crate::config::Method;
use crate::error::{CliError, Result};

pub struct PredictArgs<'a> {
    pub fit_dir: &'a Path,
    pub sites: &'a Path,
    pub checklists: Option<&'a Path>,
    pub out: &'a Path,
    pub draws: usize,
    pub level: f64,
    pub seed: u64,
}

pub fn run(args: PredictArgs) -> Result<()> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    if args.draws == 0 {
        return Err(CliError::Usage("--draws must be positive".into()));
    }
    let design: FitDesign = artifacts::read_json(&args.fit_dir.join(artifacts::DESIGN_FILE))?;
    let layout = design.layout();
    let draws = load_draws(args.fit_dir, &design, &layout, args.draws, args.seed)?;

    let sites = load_sites(args.sites)?;
    let env = design.env.apply(&sites.env_raw, &sites.columns)?;
    let csv_err = |e: csv::Error| occu::Error::Csv {
        path: args.out.to_owned(),
        source: e,
    };
    let mut w = csv::Writer::from_writer(artifacts::create(args.out)?);
    match args.checklists {
        Some(path) => {
            let checklists = load_checklists(path, &sites)?;
            let obs = artifacts::with_intercept(&design.obs.apply(&checklists.obs_raw, &checklists.columns)?);
            let p = eval::predict_checklist_prob(&draws, &env, &obs, &checklists.site_index)?;
            w.write_record(["checklist_id", "species", "p_detect"]).map_err(csv_err)?;
            for (c, id) in checklists.checklist_ids.iter().enumerate() {
                for (j, s) in design.species.iter().enumerate() {
                    w.write_record([id.as_str(), s.as_str(), &p[[c, j]].to_string()]).map_err(csv_err)?;
                }
            }
        }
        None => {
            let tail = (1.0 - args.level) / 2.0;
            let maps = eval::psi_interval_maps(&draws, &env, (tail, 1.0 - tail))?;
            w.write_record(["cell_id", "species", "psi_lo", "psi_mean", "psi_hi"]).map_err(csv_err)?;
            for (i, id) in sites.site_ids.iter().enumerate() {
                for (j, s) in design.species.iter().enumerate() {
                    w.write_record([
                        id.as_str(),
                        s.as_str(),
                        &maps.lower[[i, j]].to_string(),
                        &maps.mean[[i, j]].to_string(),
                        &maps.upper[[i, j]].to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush().map_err(|e| occu::Error::Io {
        path: args.out.to_owned(),
        source: e,
    })?;
    Ok(())
}

fn load_draws(dir: &Path, design: &FitDesign, layout: &Layout, n: usize, seed: u64) -> Result<Vec<ParameterSet>> {
    let mismatch = |file: &str| occu::Error::DimensionMismatch(format!("{file} does not match {}", artifacts::DESIGN_FILE));
    match design.method {
        Method::Vi => {
            let (q, stored) = MeanFieldPosterior::read_csv(artifacts::open(&dir.join(artifacts::POSTERIOR_FILE))?)?;
            if &stored != layout {
                return Err(mismatch(artifacts::POSTERIOR_FILE).into());
            }
            Ok(draws_to_params(layout.dims, &vi::sample_posterior(&q, n, seed))?)
        }
        Method::Mcmc => {
            let all = read_draws(&dir.join(artifacts::DRAWS_FILE), layout.len())?;
            Ok(draws_to_params(layout.dims, &thin(&all, n))?)
        }
        Method::Mle => {
            let report = MleReport::read_csv(artifacts::open(&dir.join(artifacts::MLE_FILE))?, layout)?;
            Ok(vec![report.to_parameter_set(layout)?])
        }
    }
}

/// Parameter columns of `chain,draw,<parameters…>`.
fn read_draws(path: &Path, dim: usize) -> Result<Array2<f64>> {
    let mut r = csv::Reader::from_reader(artifacts::open(path)?);
    let wrap = |e: csv::Error| occu::Error::Csv {
        path: path.to_owned(),
        source: e,
    };
    let width = r.headers().map_err(wrap)?.len();
    if width != dim + 2 {
        return Err(occu::Error::DimensionMismatch(format!(
            "{} has {} parameter columns, expected {dim}",
            path.display(),
            width.saturating_sub(2)
        ))
        .into());
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.map_err(wrap)?;
        for field in rec.iter().skip(2) {
            values.push(field.parse::<f64>().map_err(|_| occu::Error::Parse {
                path: path.to_owned(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                value: field.to_owned(),
            })?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(occu::Error::EmptyTable(path.display().to_string()).into());
    }
    Array2::from_shape_vec((rows, dim), values).map_err(|e| occu::Error::DimensionMismatch(e.to_string()).into())
}

/// At most `n` rows, evenly spaced.
fn thin(draws: &Array2<f64>, n: usize) -> Array2<f64> {
    let total = draws.nrows();
    if total <= n {
        return draws.clone();
    }
    let idx: Vec<usize> = (0..n).map(|i| i * total / n).collect();
    draws.select(ndarray::Axis(0), &idx)
}
