use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_species: usize,
    pub d_env: usize,
    pub d_obs: usize,
}

impl Dims {
    pub fn new(n_species: usize, d_env: usize, d_obs: usize) -> Self {
        Self {
            n_species,
            d_env,
            d_obs,
        }
    }

    /// Length of the flat unconstrained vector.
    pub fn n_params(&self) -> usize {
        self.n_species * (self.d_env + 1 + self.d_obs) + 2 * self.d_obs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    BetaEnv,
    Gamma,
    BetaObs,
    Mu,
    /// `ζ = log σ` in the unconstrained vector.
    LogSigma,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::BetaEnv => "beta_env",
            Block::Gamma => "gamma",
            Block::BetaObs => "beta_obs",
            Block::Mu => "mu",
            Block::LogSigma => "log_sigma",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "beta_env" => Block::BetaEnv,
            "gamma" => Block::Gamma,
            "beta_obs" => Block::BetaObs,
            "mu" => Block::Mu,
            "log_sigma" => Block::LogSigma,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub block: Block,
    pub species: Option<usize>,
    pub column: Option<usize>,
}

/// Index map of the flat unconstrained parameter vector, with names.
///
/// Order: `β^env` (species-major), `γ`, `β^obs` (species-major), `μ`, `ζ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub dims: Dims,
    pub species: Vec<String>,
    pub env_columns: Vec<String>,
    pub obs_columns: Vec<String>,
}

impl Layout {
    pub fn new(species: Vec<String>, env_columns: Vec<String>, obs_columns: Vec<String>) -> Self {
        Self {
            dims: Dims::new(species.len(), env_columns.len(), obs_columns.len()),
            species,
            env_columns,
            obs_columns,
        }
    }

    /// Layout with generated names (`sp0`, `env0`, `obs0`, ...).
    pub fn anonymous(dims: Dims) -> Self {
        let gen = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(
            gen("sp", dims.n_species),
            gen("env", dims.d_env),
            gen("obs", dims.d_obs),
        )
    }

    pub fn len(&self) -> usize {
        self.dims.n_params()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta_env(&self, j: usize, d: usize) -> usize {
        j * self.dims.d_env + d
    }

    pub fn gamma(&self, j: usize) -> usize {
        self.dims.n_species * self.dims.d_env + j
    }

    pub fn beta_obs(&self, j: usize, l: usize) -> usize {
        let Dims {
            n_species, d_env, d_obs,
        } = self.dims;
        n_species * (d_env + 1) + j * d_obs + l
    }

    pub fn mu(&self, l: usize) -> usize {
        let Dims {
            n_species, d_env, d_obs,
        } = self.dims;
        n_species * (d_env + 1 + d_obs) + l
    }

    pub fn zeta(&self, l: usize) -> usize {
        self.mu(l) + self.dims.d_obs
    }

    pub fn coordinates(&self) -> Vec<Coordinate> {
        let Dims {
            n_species, d_env, d_obs,
        } = self.dims;
        let mut out = Vec::with_capacity(self.len());
        let c = |block, species, column| Coordinate {
            block,
            species,
            column,
        };
        for j in 0..n_species {
            for d in 0..d_env {
                out.push(c(Block::BetaEnv, Some(j), Some(d)));
            }
        }
        for j in 0..n_species {
            out.push(c(Block::Gamma, Some(j), None));
        }
        for j in 0..n_species {
            for l in 0..d_obs {
                out.push(c(Block::BetaObs, Some(j), Some(l)));
            }
        }
        for l in 0..d_obs {
            out.push(c(Block::Mu, None, Some(l)));
        }
        for l in 0..d_obs {
            out.push(c(Block::LogSigma, None, Some(l)));
        }
        out
    }

    pub fn column_name(&self, coord: &Coordinate) -> &str {
        match (coord.block, coord.column) {
            (Block::BetaEnv, Some(d)) => &self.env_columns[d],
            (_, Some(l)) => &self.obs_columns[l],
            (_, None) => "",
        }
    }

    pub fn species_name(&self, coord: &Coordinate) -> &str {
        coord.species.map(|j| self.species[j].as_str()).unwrap_or("")
    }

    /// `(block, species, column)` names in flat order.
    pub fn named_rows(&self) -> Vec<(&'static str, &str, &str)> {
        self.coordinates()
            .iter()
            .map(|c| (c.block.name(), self.species_name(c), self.column_name(c)))
            .collect()
    }

    /// Short label such as `beta_obs[robin,duration]`.
    pub fn labels(&self) -> Vec<String> {
        self.named_rows()
            .into_iter()
            .map(|(b, s, c)| match (s.is_empty(), c.is_empty()) {
                (false, false) => format!("{b}[{s},{c}]"),
                (false, true) => format!("{b}[{s}]"),
                (true, false) => format!("{b}[{c}]"),
                (true, true) => b.to_owned(),
            })
            .collect()
    }

    /// Rebuilds a layout from `(block, species, column)` rows, validating
    /// that they appear in canonical flat order.
    pub fn from_named_rows<'a>(rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Result<Self> {
        let rows: Vec<_> = rows.into_iter().collect();
        let mut species = Vec::new();
        let mut env_columns = Vec::new();
        let mut obs_columns = Vec::new();
        for &(block, sp, col) in &rows {
            let push_unique = |v: &mut Vec<String>, s: &str| {
                if !s.is_empty() && !v.iter().any(|x| x == s) {
                    v.push(s.to_owned());
                }
            };
            match block {
                "beta_env" => {
                    push_unique(&mut species, sp);
                    push_unique(&mut env_columns, col);
                }
                "gamma" => push_unique(&mut species, sp),
                "beta_obs" => {
                    push_unique(&mut species, sp);
                    push_unique(&mut obs_columns, col);
                }
                "mu" | "log_sigma" | "sigma" => push_unique(&mut obs_columns, col),
                other => return Err(Error::InvalidInput(format!("unknown block `{other}`"))),
            }
        }
        let layout = Layout::new(species, env_columns, obs_columns);
        let expected = layout.named_rows();
        let matches = expected.len() == rows.len()
            && expected.iter().zip(&rows).all(|(e, r)| {
                let block_ok = e.0 == r.0 || (e.0 == "log_sigma" && r.0 == "sigma");
                block_ok && e.1 == r.1 && e.2 == r.2
            });
        if !matches {
            return Err(Error::InvalidInput(
                "parameter rows are incomplete or out of canonical order".into(),
            ));
        }
        Ok(layout)
    }
}

/// All model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    /// `J × D_env`
    pub beta_env: Array2<f64>,
    /// `J`
    pub gamma: Array1<f64>,
    /// `J × D_obs`
    pub beta_obs: Array2<f64>,
    /// `D_obs`
    pub mu: Array1<f64>,
    /// `D_obs`, strictly positive
    pub sigma: Array1<f64>,
}

impl ParameterSet {
    /// All coefficients zero, `σ = 1`.
    pub fn zeros(dims: Dims) -> Self {
        Self {
            beta_env: Array2::zeros((dims.n_species, dims.d_env)),
            gamma: Array1::zeros(dims.n_species),
            beta_obs: Array2::zeros((dims.n_species, dims.d_obs)),
            mu: Array1::zeros(dims.d_obs),
            sigma: Array1::ones(dims.d_obs),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.gamma.len(), self.beta_env.ncols(), self.beta_obs.ncols())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if self.beta_env.nrows() != d.n_species
            || self.beta_obs.nrows() != d.n_species
            || self.mu.len() != d.d_obs
            || self.sigma.len() != d.d_obs
        {
            return Err(Error::DimensionMismatch("inconsistent parameter blocks".into()));
        }
        if let Some(s) = self.sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::DomainError(format!("sigma must be positive, got {s}")));
        }
        Ok(())
    }

    /// Flat unconstrained vector with `ζ = log σ`.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims().n_params());
        out.extend(self.beta_env.iter());
        out.extend(self.gamma.iter());
        out.extend(self.beta_obs.iter());
        out.extend(self.mu.iter());
        out.extend(self.sigma.iter().map(|s| s.ln()));
        out
    }

    pub fn unpack(dims: Dims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has length {}, layout needs {}",
                flat.len(),
                dims.n_params()
            )));
        }
        let Dims {
            n_species, d_env, d_obs,
        } = dims;
        let mut rest = flat;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let beta_env = Array2::from_shape_vec((n_species, d_env), take(n_species * d_env)).expect("shape");
        let gamma = Array1::from(take(n_species));
        let beta_obs = Array2::from_shape_vec((n_species, d_obs), take(n_species * d_obs)).expect("shape");
        let mu = Array1::from(take(d_obs));
        let sigma = Array1::from(take(d_obs)).mapv(f64::exp);
        Ok(Self {
            beta_env,
            gamma,
            beta_obs,
            mu,
            sigma,
        })
    }

    /// Writes `block,species,column,value` rows; `σ` is written on its
    /// natural scale under block `sigma`.
    pub fn write_csv<W: Write>(&self, layout: &Layout, writer: W) -> Result<()> {
        if layout.dims != self.dims() {
            return Err(Error::DimensionMismatch("layout does not match parameters".into()));
        }
        let mut w = csv::Writer::from_writer(writer);
        let wrap = |e: csv::Error| Error::csv("parameters", e);
        w.write_record(["block", "species", "column", "value"]).map_err(wrap)?;
        let flat = self.pack();
        for ((block, sp, col), v) in layout.named_rows().into_iter().zip(flat) {
            let (block, v) = if block == "log_sigma" { ("sigma", v.exp()) } else { (block, v) };
            w.write_record([block, sp, col, &v.to_string()]).map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::io("parameters", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<(Self, Layout)> {
        let mut r = csv::Reader::from_reader(reader);
        let wrap = |e: csv::Error| Error::csv("parameters", e);
        let mut rows: Vec<(String, String, String, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(wrap)?;
            if rec.len() != 4 {
                return Err(Error::InvalidInput("expected 4 columns: block,species,column,value".into()));
            }
            let v: f64 = rec[3].parse().map_err(|_| Error::Parse {
                path: "parameters".into(),
                line: rec.position().map(|p| p.line()).unwrap_or(0),
                value: rec[3].to_owned(),
            })?;
            rows.push((rec[0].to_owned(), rec[1].to_owned(), rec[2].to_owned(), v));
        }
        let layout = Layout::from_named_rows(rows.iter().map(|(b, s, c, _)| (b.as_str(), s.as_str(), c.as_str())))?;
        let flat: Vec<f64> = rows
            .iter()
            .map(|(b, _, _, v)| if b == "sigma" { v.ln() } else { *v })
            .collect();
        let params = Self::unpack(layout.dims, &flat)?;
        params.validate()?;
        Ok((params, layout))
    }
}
