use std::fs;
use std::path::Path;

use ndarray::Array2;
use occu::data::{self, build_design, filter_rare_species, DesignSpec, DetectionStore, Standardizer};
use occu::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tempfile::TempDir;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

struct Files {
    dir: TempDir,
    sites: std::path::PathBuf,
    checklists: std::path::PathBuf,
    detections: std::path::PathBuf,
}

fn small_files(detections: &str) -> Files {
    let dir = TempDir::new().unwrap();
    let sites = write(dir.path(), "sites.csv", "site_id,elev,forest\nA,1.0,0.2\nB,2.5,0.1\nC,0.5,0.9\n");
    let checklists = write(
        dir.path(),
        "checklists.csv",
        "checklist_id,site_id,duration\nc1,A,30\nc2,A,45\nc3,B,10\nc4,C,60\nc5,C,20\n",
    );
    let detections = write(dir.path(), "detections.csv", detections);
    Files {
        dir,
        sites,
        checklists,
        detections,
    }
}

const FOUR_POSITIVES: &str =
    "checklist_id,species,detected\nc1,robin,1\nc2,robin,0\nc3,wren,1\nc4,robin,1\nc5,wren,1\nc5,robin,0\n";

#[test]
fn long_format_detections_are_counted() {
    let f = small_files(FOUR_POSITIVES);
    let ds = data::load_dataset(&f.sites, &f.checklists, &f.detections, None).unwrap();
    assert_eq!(ds.sites.len(), 3);
    assert_eq!(ds.checklists.len(), 5);
    assert_eq!(ds.detections.species_names, vec!["robin", "wren"]);
    assert_eq!(ds.detections.total_detections(), 4);
    assert_eq!(ds.detections.site_of_checklist, vec![0, 0, 1, 2, 2]);
    assert_eq!(ds.detections.detections[0], vec![0, 3]);
    assert_eq!(ds.detections.detections[1], vec![2, 4]);
}

#[test]
fn unknown_checklist_is_named() {
    let f = small_files("checklist_id,species,detected\nc1,robin,1\nX9,robin,1\n");
    let err = data::load_dataset(&f.sites, &f.checklists, &f.detections, None).unwrap_err();
    assert!(matches!(&err, Error::DanglingReference(id) if id == "X9"), "{err}");
}

#[test]
fn unknown_site_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sites = write(dir.path(), "sites.csv", "site_id,elev\nA,1\n");
    let checklists = write(dir.path(), "checklists.csv", "checklist_id,site_id\nc1,A\nc2,Z\n");
    let err = data::load_checklists(&checklists, &data::load_sites(&sites).unwrap()).unwrap_err();
    assert!(matches!(&err, Error::DanglingReference(id) if id == "Z"));
}

#[test]
fn missing_column_and_empty_table() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "sites.csv", "id,elev\nA,1\n");
    assert!(matches!(
        data::load_sites(&bad),
        Err(Error::MissingColumn { column, .. }) if column == "site_id"
    ));
    let empty = write(dir.path(), "empty.csv", "site_id,elev\n");
    assert!(matches!(data::load_sites(&empty), Err(Error::EmptyTable(_))));
}

#[test]
fn roster_keeps_undetected_species() {
    let f = small_files(FOUR_POSITIVES);
    let roster = write(f.dir.path(), "species.csv", "species\nwren\nrobin\nowl\n");
    let ds = data::load_dataset(&f.sites, &f.checklists, &f.detections, Some(&roster)).unwrap();
    assert_eq!(ds.detections.species_names, vec!["wren", "robin", "owl"]);
    assert_eq!(ds.detections.detection_counts(), vec![2, 2, 0]);
}

#[test]
fn loading_is_deterministic() {
    let f = small_files(FOUR_POSITIVES);
    let a = data::load_dataset(&f.sites, &f.checklists, &f.detections, None).unwrap();
    let b = data::load_dataset(&f.sites, &f.checklists, &f.detections, None).unwrap();
    assert_eq!(a.detections.to_bytes(), b.detections.to_bytes());
}

#[test]
fn rare_species_filter() {
    let site_of = vec![0; 10];
    let mut pairs = Vec::new();
    for (j, n) in [7usize, 5, 4].iter().enumerate() {
        pairs.extend((0..*n).map(|c| (c, j)));
    }
    let store = DetectionStore::from_pairs(vec!["a".into(), "b".into(), "c".into()], site_of, pairs).unwrap();
    let kept = filter_rare_species(&store, data::DEFAULT_MIN_DETECTIONS).unwrap();
    assert_eq!(data::DEFAULT_MIN_DETECTIONS, 5);
    assert_eq!(kept.species_names, vec!["a", "b"]);
    assert_eq!(filter_rare_species(&store, 0).unwrap(), store);
    assert!(matches!(filter_rare_species(&store, 8), Err(Error::AllSpeciesRemoved(8))));
}

/// Nineteen climate-like columns where exactly three are near-copies
/// (r > 0.95) of earlier ones.
#[test]
fn nineteen_columns_with_three_offenders_keep_sixteen() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = 400;
    let mut cols: Vec<Vec<f64>> = (0..16).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
    for src in [2usize, 7, 11] {
        let copy: Vec<f64> = cols[src].iter().map(|v| 3.0 * v + 0.05 * rng.sample::<f64, _>(StandardNormal)).collect();
        cols.push(copy);
    }
    assert_eq!(cols.len(), 19);
    let raw = Array2::from_shape_fn((n, 19), |(i, c)| cols[c][i]);
    let names: Vec<String> = (1..=19).map(|c| format!("bio{c}")).collect();
    let design = build_design(&raw, &names, &DesignSpec::default()).unwrap();
    assert_eq!(design.transform.kept_columns.len(), 16);
    assert_eq!(design.matrix.ncols(), 16);
}

#[test]
fn store_memory_is_linear_under_extreme_skew() {
    // one site receives 90% of checklists
    let mem = |k: usize| {
        let n_sites = k / 10 + 1;
        let site_of: Vec<usize> = (0..k).map(|c| if c % 10 == 0 { 1 + c / 10 } else { 0 }).collect();
        let pairs: Vec<(usize, usize)> = (0..k).step_by(7).map(|c| (c, 0)).collect();
        let s = DetectionStore::from_pairs(vec!["a".into()], site_of, pairs).unwrap();
        (s.memory_bytes() as f64, s.padded_cells(n_sites) as f64)
    };
    let (m1, p1) = mem(10_000);
    let (m2, p2) = mem(20_000);
    assert!((m2 / m1 - 2.0).abs() < 0.1, "{m1} -> {m2}");
    assert!(p2 / p1 > 3.5, "padded layout grows quadratically: {p1} -> {p2}");
}

proptest! {
    #[test]
    fn standardizer_inverts(rows in 2usize..20, seed in any::<u64>(), scale in 0.1f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((rows, 3), |(_, c)| {
            scale * rng.sample::<f64, _>(StandardNormal) + 10.0 * c as f64
        });
        let s = Standardizer::fit(&x, vec![false, true, false]);
        let back = s.invert(&s.apply(&x));
        for (a, b) in x.iter().zip(back.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(scale));
        }
    }

    #[test]
    fn pairs_round_trip(k in 1usize..40, j in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let site_of: Vec<usize> = (0..k).map(|_| rng.random_range(0..5)).collect();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for c in 0..k {
            for s in 0..j {
                if rng.random::<f64>() < 0.3 {
                    pairs.push((c, s));
                }
            }
        }
        let names = (0..j).map(|s| format!("s{s}")).collect();
        let store = DetectionStore::from_pairs(names, site_of, pairs.clone()).unwrap();
        let mut back = store.to_pairs();
        back.sort_unstable();
        pairs.sort_unstable();
        prop_assert_eq!(back, pairs);
    }
}
