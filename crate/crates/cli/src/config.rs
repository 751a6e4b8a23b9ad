use std::path::{Path, PathBuf};

use occu::data::{DesignSpec, DEFAULT_MIN_DETECTIONS};
use occu::mcmc::HMCConfig;
use occu::mle::MleConfig;
use occu::simulate::{CovariateLaw, VisitLaw};
use occu::vi::VIConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Reads a JSON file into `T`. Errors name the offending field path.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "(root)".to_owned() } else { field };
        CliError::field(path, field, e.into_inner().to_string())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vi,
    Mcmc,
    Mle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vi => "vi",
            Method::Mcmc => "mcmc",
            Method::Mle => "mle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub sites: PathBuf,
    pub checklists: PathBuf,
    pub detections: PathBuf,
    #[serde(default)]
    pub species: Option<PathBuf>,
}

fn default_min_detections() -> usize {
    DEFAULT_MIN_DETECTIONS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub method: Method,
    pub data: DataPaths,
    pub output_dir: PathBuf,
    /// Overrides the seed of the selected engine.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_min_detections")]
    pub min_detections: usize,
    #[serde(default)]
    pub env_design: DesignSpec,
    #[serde(default)]
    pub obs_design: DesignSpec,
    #[serde(default)]
    pub vi: VIConfig,
    #[serde(default)]
    pub mcmc: HMCConfig,
    #[serde(default)]
    pub mle: MleConfig,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_owned()
    } else {
        base.join(p)
    }
}

impl FitConfig {
    /// Makes relative paths relative to `base` and pushes the top-level seed
    /// into the engine configs.
    pub fn resolve(mut self, base: &Path) -> Self {
        self.data.sites = resolve(base, &self.data.sites);
        self.data.checklists = resolve(base, &self.data.checklists);
        self.data.detections = resolve(base, &self.data.detections);
        self.data.species = self.data.species.map(|s| resolve(base, &s));
        self.output_dir = resolve(base, &self.output_dir);
        if let Some(seed) = self.seed {
            self.vi.seed = seed;
            self.mcmc.seed = seed;
        }
        self
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        if self.vi.m_draws == 0 {
            return Err(CliError::field(path, "vi.m_draws", "must be at least 1"));
        }
        if !(self.vi.gradient_tolerance > 0.0) {
            return Err(CliError::field(path, "vi.gradient_tolerance", "must be positive"));
        }
        if !(self.mcmc.target_accept > 0.0 && self.mcmc.target_accept < 1.0) {
            return Err(CliError::field(path, "mcmc.target_accept", "must lie in (0, 1)"));
        }
        for (name, v) in [
            ("mcmc.chains", self.mcmc.chains),
            ("mcmc.sample_iters", self.mcmc.sample_iters),
            ("mcmc.max_tree_depth", self.mcmc.max_tree_depth),
        ] {
            if v == 0 {
                return Err(CliError::field(path, name, "must be positive"));
            }
        }
        if !(self.mle.ridge >= 0.0) {
            return Err(CliError::field(path, "mle.ridge", "must be non-negative"));
        }
        if !(self.mle.gradient_tolerance > 0.0) {
            return Err(CliError::field(path, "mle.gradient_tolerance", "must be positive"));
        }
        for (name, spec) in [("env_design", &self.env_design), ("obs_design", &self.obs_design)] {
            let t = spec.correlation_threshold;
            if !(t > 0.0 && t <= 1.0) {
                return Err(CliError::field(path, format!("{name}.correlation_threshold"), "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

fn default_visits() -> VisitLaw {
    VisitLaw::Poisson { mean: 3.0 }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_species: usize,
    pub n_sites: usize,
    pub d_env: usize,
    /// Observation columns including the intercept.
    pub d_obs: usize,
    #[serde(default = "default_visits")]
    pub visits: VisitLaw,
    #[serde(default)]
    pub covariates: CovariateLaw,
    /// Fixed group means; drawn from their prior when absent.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateConfig {
    pub fn validate(&self, path: &Path) -> Result<()> {
        for (name, v) in [("n_species", self.n_species), ("n_sites", self.n_sites), ("d_obs", self.d_obs)] {
            if v == 0 {
                return Err(CliError::field(path, name, "must be positive"));
            }
        }
        match (&self.mu, &self.sigma) {
            (None, None) => {}
            (Some(mu), Some(sigma)) => {
                if mu.len() != self.d_obs {
                    return Err(CliError::field(path, "mu", format!("needs {} entries", self.d_obs)));
                }
                if sigma.len() != self.d_obs {
                    return Err(CliError::field(path, "sigma", format!("needs {} entries", self.d_obs)));
                }
                if sigma.iter().any(|s| !(*s >= 0.0)) {
                    return Err(CliError::field(path, "sigma", "entries must be non-negative"));
                }
            }
            (Some(_), None) => return Err(CliError::field(path, "sigma", "required when mu is given")),
            (None, Some(_)) => return Err(CliError::field(path, "mu", "required when sigma is given")),
        }
        if self.covariates.env_indicators > self.d_env {
            return Err(CliError::field(path, "covariates.env_indicators", "exceeds d_env"));
        }
        Ok(())
    }
}
