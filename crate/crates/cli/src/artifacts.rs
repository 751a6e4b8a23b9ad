use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use occu::data::DesignTransform;
use occu::model::Layout;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Method;
use crate::error::Result;

pub const DESIGN_FILE: &str = "design.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const POSTERIOR_FILE: &str = "posterior.csv";
pub const DRAWS_FILE: &str = "draws.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MLE_FILE: &str = "mle.csv";

pub const INTERCEPT: &str = "intercept";

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| occu::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(BufWriter::new(f))
}

pub fn open(path: &Path) -> Result<File> {
    Ok(File::open(path).map_err(|e| occu::Error::Io {
        path: path.to_owned(),
        source: e,
    })?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    let io = |e: std::io::Error| occu::Error::Io {
        path: path.to_owned(),
        source: e,
    };
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = std::io::BufReader::new(open(path)?);
    serde_json::from_reader(f).map_err(|e| occu::Error::InvalidInput(format!("{}: {e}", path.display())).into())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = open(path)?;
    let mut h = Sha256::new();
    std::io::copy(&mut f, &mut h).map_err(|e| occu::Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(hex::encode(h.finalize()))
}

/// Everything needed to rebuild design matrices and the parameter layout
/// from raw tables at prediction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDesign {
    pub method: Method,
    pub species: Vec<String>,
    pub env: DesignTransform,
    /// Transform of the raw observation columns; the intercept is prepended
    /// after it is applied.
    pub obs: DesignTransform,
}

impl FitDesign {
    pub fn obs_columns(&self) -> Vec<String> {
        std::iter::once(INTERCEPT.to_owned())
            .chain(self.obs.kept_columns.iter().cloned())
            .collect()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.species.clone(), self.env.kept_columns.clone(), self.obs_columns())
    }
}

/// Prepends a column of ones.
pub fn with_intercept(x: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
    let ones = ndarray::Array2::ones((x.nrows(), 1));
    ndarray::concatenate![ndarray::Axis(1), ones, *x]
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: Option<String>,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub threads: usize,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn new(command: &'static str, config: serde_json::Value, config_path: Option<&Path>) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: config_path.map(sha256_file).transpose()?,
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            threads: rayon::current_num_threads(),
            wall_time_secs: 0.0,
        })
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Hashes every listed file in `dir` that exists.
    pub fn add_artifacts(&mut self, dir: &Path, names: &[&str]) -> Result<()> {
        for name in names {
            let p: PathBuf = dir.join(name);
            if p.exists() {
                self.artifacts.insert((*name).to_owned(), sha256_file(&p)?);
            }
        }
        Ok(())
    }
}
