use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use occu::data::{load_detections, ChecklistTable};
use occu::eval;

use crate::artifacts;
use crate::error::Result;

pub enum Reference<'a> {
    Detections(&'a Path),
    ExpertMap(&'a Path),
}

pub struct EvaluateArgs<'a> {
    pub predictions: &'a Path,
    pub reference: Reference<'a>,
    pub out: &'a Path,
    pub bootstrap: usize,
    pub seed: u64,
}

/// Long-format `<key>,species,<value columns…>` table pivoted to dense
/// `rows × species` matrices, one per requested value column. Keys and
/// species keep their order of first appearance.
struct LongTable {
    keys: Vec<String>,
    species: Vec<String>,
    values: Vec<Array2<f64>>,
}

fn read_long(path: &Path, key: &str, value_columns: &[&str]) -> Result<LongTable> {
    let wrap = |e: csv::Error| occu::Error::Csv {
        path: path.to_owned(),
        source: e,
    };
    let file_name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(artifacts::open(path)?);
    let header: Vec<String> = r.headers().map_err(wrap)?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| occu::Error::MissingColumn {
            file: file_name.clone(),
            column: name.to_owned(),
        })
    };
    let key_col = find(key)?;
    let species_col = find("species")?;
    let value_cols = value_columns.iter().map(|c| find(c)).collect::<occu::Result<Vec<_>>>()?;

    let mut keys = Vec::new();
    let mut key_index = HashMap::new();
    let mut species = Vec::new();
    let mut species_index = HashMap::new();
    let mut cells: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(wrap)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let intern = |v: &mut Vec<String>, idx: &mut HashMap<String, usize>, s: &str| {
            *idx.entry(s.to_owned()).or_insert_with(|| {
                v.push(s.to_owned());
                v.len() - 1
            })
        };
        let i = intern(&mut keys, &mut key_index, &rec[key_col]);
        let j = intern(&mut species, &mut species_index, &rec[species_col]);
        let vals = value_cols
            .iter()
            .map(|&c| {
                rec[c]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| occu::Error::Parse {
                        path: path.to_owned(),
                        line,
                        value: rec[c].to_owned(),
                    })
            })
            .collect::<occu::Result<Vec<_>>>()?;
        cells.push((i, j, vals));
    }
    if keys.is_empty() {
        return Err(occu::Error::EmptyTable(file_name).into());
    }
    let mut values = vec![Array2::from_elem((keys.len(), species.len()), f64::NAN); value_columns.len()];
    for (i, j, vals) in cells {
        if !values[0][[i, j]].is_nan() {
            return Err(occu::Error::DuplicateId(format!("{},{}", keys[i], species[j])).into());
        }
        for (m, v) in values.iter_mut().zip(vals) {
            m[[i, j]] = v;
        }
    }
    if let Some(((i, j), _)) = values[0].indexed_iter().find(|(_, v)| v.is_nan()) {
        return Err(occu::Error::InvalidInput(format!(
            "{file_name} has no row for {} `{}` and species `{}`",
            key, keys[i], species[j]
        ))
        .into());
    }
    Ok(LongTable { keys, species, values })
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    match args.reference {
        Reference::Detections(path) => {
            let preds = read_long(args.predictions, "checklist_id", &["p_detect"])?;
            let table = ChecklistTable {
                site_index: vec![0; preds.keys.len()],
                obs_raw: Array2::zeros((preds.keys.len(), 0)),
                checklist_ids: preds.keys,
                columns: Vec::new(),
            };
            let store = load_detections(path, &table, Some(preds.species))?;
            let report = eval::evaluate(&preds.values[0], &store, args.bootstrap, args.seed)?;
            report.write_csv(artifacts::create(args.out)?)?;
        }
        Reference::ExpertMap(path) => {
            let preds = read_long(args.predictions, "cell_id", &["psi_mean"])?;
            let expert = read_long(path, "cell_id", &["present"])?;
            let aligned = align(&expert, &preds.keys, &preds.species)?;
            let rows = eval::expert_report(&preds.values[0], &aligned, &preds.species)?;
            let wrap = |e: csv::Error| occu::Error::Csv {
                path: args.out.to_owned(),
                source: e,
            };
            let mut w = csv::Writer::from_writer(artifacts::create(args.out)?);
            w.write_record(["species", "brier"]).map_err(wrap)?;
            for r in &rows {
                w.write_record([r.species.clone(), r.brier.to_string()]).map_err(wrap)?;
            }
            let mean = rows.iter().map(|r| r.brier).sum::<f64>() / rows.len() as f64;
            w.write_record(["mean".to_owned(), mean.to_string()]).map_err(wrap)?;
            w.flush().map_err(|e| occu::Error::Io {
                path: args.out.to_owned(),
                source: e,
            })?;
        }
    }
    Ok(())
}

/// Reorders the expert table to the prediction rows and species. Cells or
/// species missing from the expert map are errors.
fn align(expert: &LongTable, keys: &[String], species: &[String]) -> Result<Array2<f64>> {
    let key_pos: HashMap<&str, usize> = expert.keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let sp_pos: HashMap<&str, usize> = expert.species.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    let rows = keys
        .iter()
        .map(|k| key_pos.get(k.as_str()).copied().ok_or_else(|| occu::Error::DanglingReference(k.clone())))
        .collect::<occu::Result<Vec<_>>>()?;
    let cols = species
        .iter()
        .map(|s| sp_pos.get(s.as_str()).copied().ok_or_else(|| occu::Error::DanglingReference(s.clone())))
        .collect::<occu::Result<Vec<_>>>()?;
    let src = &expert.values[0];
    Ok(Array2::from_shape_fn((keys.len(), species.len()), |(i, j)| src[[rows[i], cols[j]]]))
}
