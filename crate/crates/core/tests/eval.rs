use ndarray::{Array1, Array2};
use occu::eval::{
    auc, bootstrap_se, draws_to_params, mean_log_likelihood, predict_checklist_prob, psi_interval_maps,
};
use occu::model::{self, Dims, OccupancyPosterior, ParameterSet};
use occu::simulate::{sample_params, simulate_dataset, CovariateLaw, VisitLaw};
use occu::vi::{fit_vi, sample_posterior, MeanFieldPosterior, VIConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (a, &la) in scores.iter().zip(labels) {
        for (b, &lb) in scores.iter().zip(labels) {
            if la && !lb {
                pairs += 1.0;
                wins += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auc_counts_ordered_pairs(
        cells in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
    ) {
        let scores: Vec<f64> = cells.iter().map(|(s, _)| *s as f64 / 5.0).collect();
        let labels: Vec<bool> = cells.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        prop_assert!((auc(&scores, &labels).unwrap() - brute_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms(
        cells in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)
    ) {
        let scores: Vec<f64> = cells.iter().map(|(s, _)| *s).collect();
        let labels: Vec<bool> = cells.iter().map(|(_, l)| *l).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&squashed, &labels).unwrap());
    }

    #[test]
    fn base_rate_is_the_best_constant(
        labels in prop::collection::vec(any::<bool>(), 2..60),
        q in 0.01f64..0.99
    ) {
        let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
        prop_assume!(rate > 0.0 && rate < 1.0);
        let at = |p: f64| mean_log_likelihood(&vec![p; labels.len()], &labels).unwrap();
        prop_assert!(at(rate) >= at(q) - 1e-12);
    }
}

fn point_mass(psi_logit: f64, p_logit: f64) -> ParameterSet {
    ParameterSet {
        beta_env: Array2::zeros((1, 1)),
        gamma: Array1::from_elem(1, psi_logit),
        beta_obs: Array2::from_elem((1, 1), p_logit),
        mu: Array1::zeros(1),
        sigma: Array1::ones(1),
    }
}

#[test]
fn point_mass_prediction_is_the_product() {
    let env = Array2::zeros((2, 1));
    let obs = Array2::ones((3, 1));
    let probs = predict_checklist_prob(&[point_mass(0.0, 0.0)], &env, &obs, &[0, 1, 1]).unwrap();
    assert!(probs.iter().all(|&v| v == 0.25));
}

#[test]
fn certain_detection_predicts_mean_occupancy() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<ParameterSet> = (0..50).map(|_| point_mass(rng.random_range(-2.0..2.0), 50.0)).collect();
    let env = Array2::zeros((1, 1));
    let obs = Array2::ones((2, 1));
    let probs = predict_checklist_prob(&draws, &env, &obs, &[0, 0]).unwrap();
    let mean_psi = draws.iter().map(|d| 1.0 / (1.0 + (-d.gamma[0]).exp())).sum::<f64>() / 50.0;
    assert!((probs[[0, 0]] - mean_psi).abs() < 1e-12);
}

#[test]
fn monte_carlo_prediction_agrees_with_a_long_run() {
    let dims = Dims::new(2, 2, 2);
    let post = MeanFieldPosterior {
        mean: (0..dims.n_params()).map(|i| 0.3 * (i as f64).sin()).collect(),
        log_sd: vec![-1.0; dims.n_params()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let env = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
    let obs = Array2::from_shape_fn((5, 2), |(_, l)| if l == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let site = [0, 1, 1, 2, 0];
    let short = draws_to_params(dims, &sample_posterior(&post, 500, 1)).unwrap();
    let long = draws_to_params(dims, &sample_posterior(&post, 100_000, 2)).unwrap();
    let estimate = predict_checklist_prob(&short, &env, &obs, &site).unwrap();
    let reference = predict_checklist_prob(&long, &env, &obs, &site).unwrap();
    // per-draw products give the standard error of the short estimate
    let per_draw: Vec<Array2<f64>> = short
        .iter()
        .map(|d| {
            let psi = model::psi(d, &env).unwrap();
            let p = model::detection_prob(d, &obs).unwrap();
            Array2::from_shape_fn(p.dim(), |(c, j)| psi[[site[c], j]] * p[[c, j]])
        })
        .collect();
    for ((c, j), &e) in estimate.indexed_iter() {
        let vals: Vec<f64> = per_draw.iter().map(|m| m[[c, j]]).collect();
        let mean = vals.iter().sum::<f64>() / 500.0;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 499.0).sqrt();
        assert!((e - reference[[c, j]]).abs() < 3.0 * sd / 500f64.sqrt(), "cell ({c},{j})");
    }
}

#[test]
fn bootstrap_error_shrinks_with_sample_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut se = |n: usize| {
        let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l)) + rng.random::<f64>() * 1.5).collect();
        bootstrap_se(auc, &scores, &labels, 500, 9).unwrap().se
    };
    let (small, large) = (se(20), se(200));
    assert!(large < small, "{small} vs {large}");
}

#[test]
fn intervals_cover_true_occupancy() {
    let params = sample_params(Dims::new(10, 2, 2), 31, None).unwrap();
    let sim = simulate_dataset(&params, 500, VisitLaw::Poisson { mean: 3.0 }, CovariateLaw::default(), 31).unwrap();
    let post = OccupancyPosterior::new(sim.occupancy_data().unwrap(), sim.layout.clone()).unwrap();
    let (q, _) = fit_vi(&post, &VIConfig::default(), None).unwrap();
    let draws = draws_to_params(sim.layout.dims, &sample_posterior(&q, 1000, 0)).unwrap();
    let maps = psi_interval_maps(&draws, &sim.env, (0.025, 0.975)).unwrap();
    let truth = sim.true_psi();
    let covered = truth
        .indexed_iter()
        .filter(|(ij, &t)| maps.lower[*ij] <= t && t <= maps.upper[*ij])
        .count();
    let rate = covered as f64 / truth.len() as f64;
    assert!((0.85..=0.99).contains(&rate), "coverage {rate}");
}
