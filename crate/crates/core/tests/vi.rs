use occu::density::{DiagGaussian, LogDensity};
use occu::model::{Dims, OccupancyPosterior};
use occu::simulate::{sample_params, simulate_dataset, CovariateLaw, VisitLaw};
use occu::vi::{fit_vi, kl_hessian_vector, kl_objective, sample_posterior, FixedDrawSet, MeanFieldPosterior, VIConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(m_draws: usize, seed: u64) -> VIConfig {
    VIConfig {
        m_draws,
        seed,
        ..VIConfig::default()
    }
}

fn small_posterior(seed: u64) -> OccupancyPosterior {
    let params = sample_params(Dims::new(2, 2, 2), seed, None).unwrap();
    let sim = simulate_dataset(&params, 150, VisitLaw::Poisson { mean: 3.0 }, CovariateLaw::default(), seed).unwrap();
    OccupancyPosterior::new(sim.occupancy_data().unwrap(), sim.layout.clone()).unwrap()
}

#[test]
fn recovers_a_univariate_gaussian() {
    let target = DiagGaussian {
        mean: vec![3.0],
        sd: vec![2.0],
    };
    let (post, diag) = fit_vi(&target, &config(200, 1), None).unwrap();
    assert!(diag.converged);
    assert!((post.mean[0] - 3.0).abs() / 3.0 < 0.02, "{}", post.mean[0]);
    assert!((post.sd()[0] - 2.0).abs() / 2.0 < 0.02, "{}", post.sd()[0]);
}

#[test]
fn same_seed_is_bit_identical() {
    let target = small_posterior(4);
    let (a, _) = fit_vi(&target, &config(20, 7), None).unwrap();
    let (b, _) = fit_vi(&target, &config(20, 7), None).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.log_sd, b.log_sd);
}

#[test]
fn occupancy_fit_converges() {
    let target = small_posterior(2);
    let (post, diag) = fit_vi(&target, &config(50, 0), None).unwrap();
    assert!(diag.converged, "{} iterations, grad {}", diag.iterations, diag.grad_inf_norm);
    assert!(diag.iterations <= 500);
    assert!(post.mean.iter().chain(&post.log_sd).all(|v| v.is_finite()));
    let trace = &diag.objective_trace;
    assert!(trace.last().unwrap() <= trace.first().unwrap());
}

#[test]
fn gaussian_mean_block_is_constant_in_the_mean() {
    let target = DiagGaussian {
        mean: vec![0.5, -1.0, 2.0],
        sd: vec![1.0, 0.3, 2.5],
    };
    let draws = FixedDrawSet::generate(30, 3, 5, false);
    let v = [0.3, -0.2, 1.1, 0.7, 0.1, -0.4];
    let at = |mean: Vec<f64>| {
        let eta = MeanFieldPosterior {
            mean,
            log_sd: vec![0.1, -0.5, 0.2],
        };
        kl_hessian_vector(&target, &eta, &v, &draws).unwrap()
    };
    let a = at(vec![0.0, 0.0, 0.0]);
    let b = at(vec![4.0, -3.0, 10.0]);
    // the log-sd block carries the gradient, which moves with the mean
    for (x, y) in a[..3].iter().zip(&b[..3]) {
        assert!((x - y).abs() < 1e-12);
    }
    // the mean block is −H v_m exactly
    for i in 0..3 {
        let want = v[i] / target.sd[i].powi(2);
        let coupled: f64 = (0..30).map(|m| draws.row(m)[i]).sum::<f64>() / 30.0;
        let s = [0.1f64, -0.5, 0.2][i].exp();
        let want = want + s * coupled * v[3 + i] / target.sd[i].powi(2);
        assert!((a[i] - want).abs() < 1e-12, "{} vs {want}", a[i]);
    }
}

#[test]
fn hessian_vector_product_is_symmetric() {
    let target = small_posterior(6);
    let p = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let eta = MeanFieldPosterior {
        mean: (0..p).map(|_| rng.random_range(-0.5..0.5)).collect(),
        log_sd: (0..p).map(|_| rng.random_range(-2.0..-0.5)).collect(),
    };
    let draws = FixedDrawSet::generate(10, p, 1, true);
    let u: Vec<f64> = (0..2 * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..2 * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hu = kl_hessian_vector(&target, &eta, &u, &draws).unwrap();
    let hw = kl_hessian_vector(&target, &eta, &w, &draws).unwrap();
    let a: f64 = w.iter().zip(&hu).map(|(x, y)| x * y).sum();
    let b: f64 = u.iter().zip(&hw).map(|(x, y)| x * y).sum();
    assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn tiny_scale_draws_sit_on_the_mean() {
    let post = MeanFieldPosterior {
        mean: vec![1.0, -2.0, 0.5],
        log_sd: vec![-20.0; 3],
    };
    let draws = sample_posterior(&post, 50, 0);
    for row in draws.rows() {
        for (a, b) in row.iter().zip(&post.mean) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}

#[test]
fn posterior_draws_have_the_right_moments() {
    let post = MeanFieldPosterior {
        mean: vec![1.0, -2.0],
        log_sd: vec![0.0, 1.0],
    };
    let n = 100_000;
    let draws = sample_posterior(&post, n, 11);
    for i in 0..2 {
        let col = draws.column(i);
        let mean = col.mean().unwrap();
        let sd = post.sd()[i];
        assert!((mean - post.mean[i]).abs() < 4.0 * sd / (n as f64).sqrt());
        let var = col.var(1.0);
        assert!((var / (sd * sd) - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn objective_vanishes_at_the_exact_posterior() {
    let target = DiagGaussian {
        mean: vec![0.0],
        sd: vec![1.0],
    };
    let eta = MeanFieldPosterior {
        mean: vec![0.0],
        log_sd: vec![0.0],
    };
    let draws = FixedDrawSet::generate(1000, 1, 21, false);
    let v = kl_objective(&target, &eta, &draws).unwrap();
    assert!(v.abs() < 0.05, "{v}");
}

#[test]
fn more_draws_shrink_scale_error() {
    // without moment matching the optimum depends on the draw sample
    let target = DiagGaussian {
        mean: vec![0.0; 4],
        sd: vec![1.0; 4],
    };
    let err = |m: usize| -> f64 {
        (0..20)
            .map(|seed| {
                let cfg = VIConfig {
                    moment_match: false,
                    ..config(m, seed)
                };
                let (post, _) = fit_vi(&target, &cfg, None).unwrap();
                post.log_sd.iter().map(|l| l * l).sum::<f64>()
            })
            .sum::<f64>()
    };
    let (small, large) = (err(25), err(100));
    assert!(large < small, "{small} vs {large}");
}
