//! Checklist tables, design matrices and the sparse detection encoding.
//!
//! Detections are held per species as a sorted list of checklist indices
//! where the species was recorded, together with one checklist → site index
//! vector shared by all species. Storage is `O(K + total detections)`
//! regardless of how visits are distributed over sites; a padded
//! `N × K_max` layout is never built.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_DETECTIONS: usize = 5;
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteTable {
    pub site_ids: Vec<String>,
    pub columns: Vec<String>,
    /// `N × D_raw`, one row per site.
    pub env_raw: Array2<f64>,
}

impl SiteTable {
    pub fn len(&self) -> usize {
        self.site_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_ids.is_empty()
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.site_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChecklistTable {
    pub checklist_ids: Vec<String>,
    pub site_index: Vec<usize>,
    pub columns: Vec<String>,
    /// `K × D_obs_raw`, one row per checklist.
    pub obs_raw: Array2<f64>,
}

impl ChecklistTable {
    pub fn len(&self) -> usize {
        self.checklist_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checklist_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionStore {
    pub species_names: Vec<String>,
    /// Per species, strictly increasing checklist indices with a detection.
    pub detections: Vec<Vec<u32>>,
    pub site_of_checklist: Vec<usize>,
}

impl DetectionStore {
    /// Builds a store from `(checklist index, species index)` pairs. Duplicate
    /// pairs collapse.
    pub fn from_pairs(
        species_names: Vec<String>,
        site_of_checklist: Vec<usize>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let k = site_of_checklist.len();
        let mut sets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); species_names.len()];
        for (c, j) in pairs {
            if c >= k {
                return Err(Error::DanglingReference(format!("checklist index {c}")));
            }
            let set = sets
                .get_mut(j)
                .ok_or_else(|| Error::DanglingReference(format!("species index {j}")))?;
            set.insert(c as u32);
        }
        Ok(Self {
            species_names,
            detections: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            site_of_checklist,
        })
    }

    pub fn n_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn n_checklists(&self) -> usize {
        self.site_of_checklist.len()
    }

    pub fn total_detections(&self) -> usize {
        self.detections.iter().map(Vec::len).sum()
    }

    pub fn detection_counts(&self) -> Vec<usize> {
        self.detections.iter().map(Vec::len).collect()
    }

    /// Long-format `(checklist index, species index)` pairs in species-major
    /// order; the inverse of [`DetectionStore::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(usize, usize)> {
        self.detections
            .iter()
            .enumerate()
            .flat_map(|(j, d)| d.iter().map(move |&c| (c as usize, j)))
            .collect()
    }

    /// Keeps only the listed species, in the given order.
    pub fn select_species(&self, keep: &[usize]) -> Self {
        Self {
            species_names: keep.iter().map(|&j| self.species_names[j].clone()).collect(),
            detections: keep.iter().map(|&j| self.detections[j].clone()).collect(),
            site_of_checklist: self.site_of_checklist.clone(),
        }
    }

    /// Heap bytes held by the encoding.
    pub fn memory_bytes(&self) -> usize {
        self.site_of_checklist.len() * std::mem::size_of::<usize>()
            + self.total_detections() * std::mem::size_of::<u32>()
            + self.detections.len() * std::mem::size_of::<Vec<u32>>()
    }

    /// Cells a padded `N × K_max` observation matrix per species would need.
    pub fn padded_cells(&self, n_sites: usize) -> usize {
        let mut visits = vec![0usize; n_sites];
        for &s in &self.site_of_checklist {
            visits[s] += 1;
        }
        n_sites * visits.into_iter().max().unwrap_or(0) * self.n_species()
    }

    /// Deterministic binary encoding, little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.memory_bytes() + 64);
        let push = |out: &mut Vec<u8>, v: u64| out.extend_from_slice(&v.to_le_bytes());
        push(&mut out, self.species_names.len() as u64);
        for name in &self.species_names {
            push(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
        }
        push(&mut out, self.site_of_checklist.len() as u64);
        for &s in &self.site_of_checklist {
            push(&mut out, s as u64);
        }
        for d in &self.detections {
            push(&mut out, d.len() as u64);
            for &c in d {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        out
    }
}

/// Drops species with fewer than `min_detections` detections, preserving
/// the order of the survivors.
pub fn filter_rare_species(store: &DetectionStore, min_detections: usize) -> Result<DetectionStore> {
    let keep: Vec<usize> = (0..store.n_species())
        .filter(|&j| store.detections[j].len() >= min_detections)
        .collect();
    if keep.is_empty() {
        return Err(Error::AllSpeciesRemoved(min_detections));
    }
    Ok(store.select_species(&keep))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sites: SiteTable,
    pub checklists: ChecklistTable,
    pub detections: DetectionStore,
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn headers(reader: &mut csv::Reader<File>, path: &Path) -> Result<Vec<String>> {
    Ok(reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_owned)
        .collect())
}

fn require_column(headers: &[String], pos: usize, name: &str, path: &Path) -> Result<()> {
    if headers.get(pos).map(String::as_str) != Some(name) {
        return Err(Error::MissingColumn {
            file: file_label(path),
            column: name.to_owned(),
        });
    }
    Ok(())
}

fn parse_f64(value: &str, path: &Path, line: u64) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line,
            value: value.to_owned(),
        })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

type NumericTable = (Vec<Vec<String>>, Vec<String>, Array2<f64>);

/// Reads an id column followed by numeric covariates. Returns the ids, any
/// extra leading string columns, covariate names and the numeric matrix.
fn read_numeric_table(
    path: &Path,
    key_columns: &[&str],
) -> Result<NumericTable> {
    let mut reader = open_csv(path)?;
    let header = headers(&mut reader, path)?;
    for (pos, name) in key_columns.iter().enumerate() {
        require_column(&header, pos, name, path)?;
    }
    let n_keys = key_columns.len();
    let columns: Vec<String> = header[n_keys..].to_vec();
    let mut keys: Vec<Vec<String>> = vec![Vec::new(); n_keys];
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = line_of(&record);
        for (c, key) in keys.iter_mut().enumerate() {
            key.push(record[c].to_owned());
        }
        for field in record.iter().skip(n_keys) {
            values.push(parse_f64(field, path, line)?);
        }
    }
    let rows = keys[0].len();
    if rows == 0 {
        return Err(Error::EmptyTable(file_label(path)));
    }
    let matrix = Array2::from_shape_vec((rows, columns.len()), values)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok((keys, columns, matrix))
}

pub fn load_sites(path: &Path) -> Result<SiteTable> {
    let (mut keys, columns, env_raw) = read_numeric_table(path, &["site_id"])?;
    let site_ids = keys.remove(0);
    let mut seen = BTreeSet::new();
    for id in &site_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(SiteTable {
        site_ids,
        columns,
        env_raw,
    })
}

pub fn load_checklists(path: &Path, sites: &SiteTable) -> Result<ChecklistTable> {
    let (mut keys, columns, obs_raw) = read_numeric_table(path, &["checklist_id", "site_id"])?;
    let site_keys = keys.pop().expect("two key columns");
    let checklist_ids = keys.pop().expect("two key columns");
    let mut seen = BTreeSet::new();
    for id in &checklist_ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    let index = sites.index_of();
    let site_index = site_keys
        .iter()
        .map(|s| {
            index
                .get(s.as_str())
                .copied()
                .ok_or_else(|| Error::DanglingReference(s.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChecklistTable {
        checklist_ids,
        site_index,
        columns,
        obs_raw,
    })
}

pub fn load_species_roster(path: &Path) -> Result<Vec<String>> {
    let mut reader = open_csv(path)?;
    let header = headers(&mut reader, path)?;
    require_column(&header, 0, "species", path)?;
    let mut roster = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let name = record[0].to_owned();
        if !seen.insert(name.clone()) {
            return Err(Error::DuplicateId(name));
        }
        roster.push(name);
    }
    if roster.is_empty() {
        return Err(Error::EmptyTable(file_label(path)));
    }
    Ok(roster)
}

/// Reads long-format detections against a checklist table. Without a roster,
/// species are ordered by first appearance in the file.
pub fn load_detections(
    path: &Path,
    checklists: &ChecklistTable,
    roster: Option<Vec<String>>,
) -> Result<DetectionStore> {
    let mut reader = open_csv(path)?;
    let header = headers(&mut reader, path)?;
    for name in ["checklist_id", "species", "detected"] {
        if !header.iter().any(|h| h == name) {
            return Err(Error::MissingColumn {
                file: file_label(path),
                column: name.to_owned(),
            });
        }
    }
    let col = |name: &str| header.iter().position(|h| h == name).expect("checked above");
    let (c_col, s_col, d_col) = (col("checklist_id"), col("species"), col("detected"));

    let checklist_index: HashMap<&str, usize> = checklists
        .checklist_ids
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let fixed_roster = roster.is_some();
    let mut species = roster.unwrap_or_default();
    let mut species_index: HashMap<String, usize> = species
        .iter()
        .enumerate()
        .map(|(j, s)| (s.clone(), j))
        .collect();

    let mut pairs = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows += 1;
        let line = line_of(&record);
        let checklist = &record[c_col];
        let name = &record[s_col];
        let c = *checklist_index
            .get(checklist)
            .ok_or_else(|| Error::DanglingReference(checklist.to_owned()))?;
        let j = match species_index.get(name) {
            Some(&j) => j,
            None if fixed_roster => return Err(Error::DanglingReference(name.to_owned())),
            None => {
                species.push(name.to_owned());
                species_index.insert(name.to_owned(), species.len() - 1);
                species.len() - 1
            }
        };
        let detected = match record[d_col].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    value: other.to_owned(),
                })
            }
        };
        if detected {
            pairs.push((c, j));
        }
    }
    if rows == 0 && species.is_empty() {
        return Err(Error::EmptyTable(file_label(path)));
    }
    if species.is_empty() {
        return Err(Error::EmptyTable("species roster".into()));
    }
    DetectionStore::from_pairs(species, checklists.site_index.clone(), pairs)
}

pub fn load_dataset(
    sites_csv: &Path,
    checklists_csv: &Path,
    detections_csv: &Path,
    species_csv: Option<&Path>,
) -> Result<Dataset> {
    let sites = load_sites(sites_csv)?;
    let checklists = load_checklists(checklists_csv, &sites)?;
    let roster = species_csv.map(load_species_roster).transpose()?;
    let detections = load_detections(detections_csv, &checklists, roster)?;
    Ok(Dataset {
        sites,
        checklists,
        detections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default)]
    pub quadratic_columns: Vec<String>,
    #[serde(default = "default_threshold")]
    pub correlation_threshold: f64,
    #[serde(default)]
    pub indicator_columns: Vec<String>,
}

fn default_threshold() -> f64 {
    DEFAULT_CORRELATION_THRESHOLD
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            quadratic_columns: Vec::new(),
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            indicator_columns: Vec::new(),
        }
    }
}

/// Column centring and scaling. Indicator columns pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub passthrough: Vec<bool>,
}

impl Standardizer {
    /// Fits means and population standard deviations (denominator `n`).
    pub fn fit(x: &Array2<f64>, passthrough: Vec<bool>) -> Self {
        let n = x.nrows() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for (c, col) in x.columns().into_iter().enumerate() {
            if passthrough[c] {
                means.push(0.0);
                sds.push(1.0);
                continue;
            }
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            sds.push(var.sqrt());
        }
        Self {
            means,
            sds,
            passthrough,
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            if !self.passthrough[c] {
                col.mapv_inplace(|v| (v - self.means[c]) / self.sds[c]);
            }
        }
        out
    }

    pub fn invert(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut out = z.clone();
        for (c, mut col) in out.columns_mut().into_iter().enumerate() {
            if !self.passthrough[c] {
                col.mapv_inplace(|v| v * self.sds[c] + self.means[c]);
            }
        }
        out
    }
}

/// Recipe that turns raw covariate columns into the model design matrix.
/// Fitted once on training data and re-applied to prediction inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTransform {
    pub kept_columns: Vec<String>,
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone)]
pub struct Design {
    pub matrix: Array2<f64>,
    pub transform: DesignTransform,
}

const SQUARE_SUFFIX: &str = "^2";

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let denom = n - 1.0;
    (sab / denom) / ((saa / denom).sqrt() * (sbb / denom).sqrt())
}

/// Expands quadratic terms, drops columns whose absolute sample correlation
/// with an earlier kept column exceeds the threshold (left-to-right scan),
/// then standardizes every non-indicator column.
pub fn build_design(raw: &Array2<f64>, names: &[String], spec: &DesignSpec) -> Result<Design> {
    if raw.nrows() == 0 {
        return Err(Error::EmptyTable("design input".into()));
    }
    if names.len() != raw.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} column names for {} columns",
            names.len(),
            raw.ncols()
        )));
    }
    if !(spec.correlation_threshold > 0.0 && spec.correlation_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "correlation_threshold {} outside (0, 1]",
            spec.correlation_threshold
        )));
    }
    for name in spec.quadratic_columns.iter().chain(&spec.indicator_columns) {
        if !names.contains(name) {
            return Err(Error::MissingColumn {
                file: "design".into(),
                column: name.clone(),
            });
        }
    }

    let mut cols: Vec<(String, Vec<f64>, bool)> = names
        .iter()
        .zip(raw.columns())
        .map(|(n, c)| (n.clone(), c.to_vec(), spec.indicator_columns.contains(n)))
        .collect();
    for q in &spec.quadratic_columns {
        if spec.indicator_columns.contains(q) {
            continue;
        }
        let c = names.iter().position(|n| n == q).expect("checked above");
        let squared = raw.column(c).iter().map(|v| v * v).collect();
        cols.push((format!("{q}{SQUARE_SUFFIX}"), squared, false));
    }

    for (name, values, indicator) in &cols {
        let first = values[0];
        if values.iter().all(|&v| v == first) {
            if *indicator {
                log::warn!("indicator column `{name}` is constant");
            } else {
                return Err(Error::ZeroVarianceColumn(name.clone()));
            }
        }
    }

    let mut kept: Vec<usize> = Vec::new();
    for (c, (name, values, _)) in cols.iter().enumerate() {
        let varies = values.iter().any(|&v| v != values[0]);
        let offender = varies
            && kept.iter().any(|&k| {
                let other = &cols[k].1;
                other.iter().any(|&v| v != other[0])
                    && pearson(values, other).abs() > spec.correlation_threshold
            });
        if offender {
            log::info!("dropping `{name}`: correlated above {}", spec.correlation_threshold);
        } else {
            kept.push(c);
        }
    }

    let n = raw.nrows();
    let mut matrix = Array2::zeros((n, kept.len()));
    for (out_c, &c) in kept.iter().enumerate() {
        for (r, v) in cols[c].1.iter().enumerate() {
            matrix[[r, out_c]] = *v;
        }
    }
    let passthrough: Vec<bool> = kept.iter().map(|&c| cols[c].2).collect();
    let standardizer = Standardizer::fit(&matrix, passthrough);
    let transform = DesignTransform {
        kept_columns: kept.iter().map(|&c| cols[c].0.clone()).collect(),
        standardizer,
    };
    Ok(Design {
        matrix: transform.standardizer.apply(&matrix),
        transform,
    })
}

impl DesignTransform {
    /// Re-applies the fitted transform to new raw columns.
    pub fn apply(&self, raw: &Array2<f64>, names: &[String]) -> Result<Array2<f64>> {
        let lookup = |name: &str| {
            names.iter().position(|n| n == name).ok_or_else(|| Error::MissingColumn {
                file: "design".into(),
                column: name.to_owned(),
            })
        };
        let mut matrix = Array2::zeros((raw.nrows(), self.kept_columns.len()));
        for (out_c, name) in self.kept_columns.iter().enumerate() {
            let (src, square) = match lookup(name) {
                Ok(c) => (c, false),
                Err(e) => match name.strip_suffix(SQUARE_SUFFIX) {
                    Some(base) => (lookup(base)?, true),
                    None => return Err(e),
                },
            };
            for r in 0..raw.nrows() {
                let v = raw[[r, src]];
                matrix[[r, out_c]] = if square { v * v } else { v };
            }
        }
        Ok(self.standardizer.apply(&matrix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn standardizes_with_population_sd() {
        let raw = array![[1.0], [2.0], [3.0]];
        let d = build_design(&raw, &names(1), &DesignSpec::default()).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        let expect = [-1.0 / sd, 0.0, 1.0 / sd];
        for (got, want) in d.matrix.column(0).iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((d.transform.standardizer.means[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_column_is_dropped() {
        let raw = array![[1.0, 2.0], [2.0, 4.0], [4.0, 8.0], [3.0, 6.0]];
        let d = build_design(&raw, &names(2), &DesignSpec::default()).unwrap();
        assert_eq!(d.transform.kept_columns, vec!["c0"]);
    }

    #[test]
    fn negative_correlation_counts() {
        let raw = array![[1.0, -2.0], [2.0, -4.0], [4.0, -8.1], [3.0, -6.0]];
        let d = build_design(&raw, &names(2), &DesignSpec::default()).unwrap();
        assert_eq!(d.matrix.ncols(), 1);
    }

    #[test]
    fn constant_continuous_column_is_an_error() {
        let raw = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let err = build_design(&raw, &names(2), &DesignSpec::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroVarianceColumn(ref c) if c == "c1"));
    }

    #[test]
    fn constant_indicator_is_kept_unscaled() {
        let raw = array![[1.0, 1.0], [2.0, 1.0], [3.0, 1.0]];
        let spec = DesignSpec {
            indicator_columns: vec!["c1".into()],
            ..Default::default()
        };
        let d = build_design(&raw, &names(2), &spec).unwrap();
        assert_eq!(d.matrix.column(1).to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_columns_are_appended_before_standardizing() {
        let raw = array![[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [2.0, 1.0]];
        let spec = DesignSpec {
            quadratic_columns: vec!["c0".into()],
            indicator_columns: vec!["c1".into()],
            ..Default::default()
        };
        let d = build_design(&raw, &names(2), &spec).unwrap();
        assert_eq!(d.transform.kept_columns, vec!["c0", "c1", "c0^2"]);
        let sq = d.matrix.column(2);
        assert!(sq.sum().abs() < 1e-12);
        let re = d.transform.apply(&raw, &names(2)).unwrap();
        assert!((&re - &d.matrix).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn missing_quadratic_column_is_rejected() {
        let raw = array![[1.0], [2.0]];
        let spec = DesignSpec {
            quadratic_columns: vec!["nope".into()],
            ..Default::default()
        };
        assert!(matches!(
            build_design(&raw, &names(1), &spec),
            Err(Error::MissingColumn { .. })
        ));
    }

    #[test]
    fn filter_keeps_order() {
        let store = DetectionStore::from_pairs(
            vec!["a".into(), "b".into(), "c".into()],
            (0..10).collect(),
            (0..7).map(|c| (c, 0)).chain((0..5).map(|c| (c, 1))).chain((0..4).map(|c| (c, 2))),
        )
        .unwrap();
        let kept = filter_rare_species(&store, 5).unwrap();
        assert_eq!(kept.species_names, vec!["a", "b"]);
        assert_eq!(filter_rare_species(&store, 0).unwrap(), store);
        assert!(matches!(
            filter_rare_species(&store, 8),
            Err(Error::AllSpeciesRemoved(8))
        ));
        assert_eq!(DEFAULT_MIN_DETECTIONS, 5);
    }

    #[test]
    fn padded_cells_scale_with_max_visits() {
        // One site receives 90% of the checklists.
        let k = 1000;
        let sites: Vec<usize> = (0..k).map(|c| if c % 10 == 0 { 1 + c / 10 } else { 0 }).collect();
        let n_sites = 101;
        let store = DetectionStore::from_pairs(vec!["a".into()], sites, [(3, 0)]).unwrap();
        assert_eq!(store.padded_cells(n_sites), n_sites * 900);
        assert!(store.memory_bytes() < 20 * k);
    }
}
