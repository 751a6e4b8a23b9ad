use std::path::Path;

use occu::model::Dims;
use occu::simulate;

use crate::artifacts::{self, Manifest};
use crate::config::{load_json, SimulateConfig};
use crate::error::Result;

pub fn run(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let start = std::time::Instant::now();
    let mut cfg: SimulateConfig = load_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate(config)?;
    let dims = Dims::new(cfg.n_species, cfg.d_env, cfg.d_obs);
    let hyper = cfg.mu.as_deref().zip(cfg.sigma.as_deref());
    let params = simulate::sample_params(dims, cfg.seed, hyper)?;
    let sim = simulate::simulate_dataset(&params, cfg.n_sites, cfg.visits, cfg.covariates, cfg.seed)?;
    sim.write_dir(out)?;
    log::info!(
        "simulated {} sites, {} checklists, {} detections into {}",
        sim.n_sites(),
        sim.n_checklists(),
        sim.detections().total_detections(),
        out.display()
    );
    let value = serde_json::to_value(&cfg).map_err(|e| occu::Error::InvalidInput(e.to_string()))?;
    let mut manifest = Manifest::new("simulate", value, Some(config))?;
    manifest.add_artifacts(
        out,
        &["sites.csv", "checklists.csv", "detections.csv", "species.csv", "truth_y.csv", "truth_params.csv"],
    )?;
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    artifacts::write_json(&out.join(artifacts::MANIFEST_FILE), &manifest)
}
