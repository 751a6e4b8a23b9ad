use ndarray::Array3;
use occu::density::{DenseGaussian, DiagGaussian};
use occu::mcmc::{self, hamiltonian, leapfrog, HMCConfig, PhasePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn config(chains: usize, seed: u64) -> HMCConfig {
    HMCConfig {
        warmup_iters: 1000,
        sample_iters: 1000,
        chains,
        seed,
        ..HMCConfig::default()
    }
}

#[test]
fn standard_normal_moments() {
    let t = DiagGaussian {
        mean: vec![0.0; 10],
        sd: vec![1.0; 10],
    };
    let r = mcmc::sample_mcmc(&t, &config(4, 11)).unwrap();
    let n = 4000.0;
    for k in 0..10 {
        let col = r.draws.index_axis(ndarray::Axis(2), k);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.05, "coordinate {k}: mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "coordinate {k}: variance {var}");
    }
    assert_eq!(r.divergence_count, 0);
}

#[test]
fn correlated_pair_recovers_correlation() {
    let t = DenseGaussian::correlated_pair(0.9);
    let r = mcmc::sample_mcmc(&t, &config(4, 5)).unwrap();
    let xs: Vec<f64> = r.draws.index_axis(ndarray::Axis(2), 0).iter().copied().collect();
    let ys: Vec<f64> = r.draws.index_axis(ndarray::Axis(2), 1).iter().copied().collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let corr = sxy / (sxx * syy).sqrt();
    assert!((corr - 0.9).abs() < 0.05, "correlation {corr}");
}

/// Asymptotic Kolmogorov survival function `P(K > x)`.
fn kolmogorov_pvalue(x: f64) -> f64 {
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

#[test]
fn one_dimensional_draws_pass_ks() {
    let t = DiagGaussian {
        mean: vec![1.5],
        sd: vec![2.0],
    };
    let r = mcmc::sample_mcmc(&t, &config(4, 3)).unwrap();
    let mut xs: Vec<f64> = r.draws.iter().copied().collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let target = Normal::new(1.5, 2.0).unwrap();
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = target.cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_pvalue(d * n.sqrt());
    assert!(p > 0.01, "KS statistic {d}, p-value {p}");
}

#[test]
fn kolmogorov_tail_matches_tabulated_critical_value() {
    // the 1% critical value of the Kolmogorov distribution is 1.6276
    assert!((kolmogorov_pvalue(1.6276) - 0.01).abs() < 1e-4);
}

fn energy_error(eps: f64) -> f64 {
    let t = DiagGaussian {
        mean: vec![0.0, 1.0, -1.0],
        sd: vec![1.0, 0.7, 1.8],
    };
    let inv_mass = [1.0, 0.5, 2.0];
    let mut z = PhasePoint::new(&t, vec![0.8, 0.1, 0.3]);
    z.p = vec![0.5, -1.2, 0.4];
    let h0 = hamiltonian(&z, &inv_mass);
    let steps = (1.0 / eps).round() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        leapfrog(&t, &mut z, eps, &inv_mass);
        worst = worst.max((hamiltonian(&z, &inv_mass) - h0).abs());
    }
    worst
}

#[test]
fn leapfrog_energy_error_is_second_order() {
    for eps in [0.1, 0.05, 0.025] {
        let ratio = energy_error(eps) / energy_error(eps / 2.0);
        assert!(ratio >= 3.5, "eps {eps}: ratio {ratio}");
    }
}

#[test]
fn fixed_seed_is_reproducible() {
    let t = DiagGaussian {
        mean: vec![0.3, -0.2],
        sd: vec![1.0, 0.4],
    };
    let cfg = HMCConfig {
        warmup_iters: 150,
        sample_iters: 100,
        chains: 3,
        seed: 42,
        ..HMCConfig::default()
    };
    let a = mcmc::sample_mcmc(&t, &cfg).unwrap();
    let b = mcmc::sample_mcmc(&t, &cfg).unwrap();
    assert_eq!(a.draws, b.draws);
    assert_eq!(a.step_size, b.step_size);
    let c = mcmc::sample_mcmc(&t, &HMCConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.draws, c.draws);
}

#[test]
fn iid_draws_have_unit_rhat_and_full_ess() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = Array3::from_shape_fn((4, 1000, 3), |_| StandardNormal.sample(&mut rng));
    for s in mcmc::summarize_draws(draws.view()).unwrap() {
        assert!((0.99..=1.01).contains(&s.rhat), "rhat {}", s.rhat);
        assert!(s.ess_bulk >= 0.5 * 4000.0, "ess {}", s.ess_bulk);
    }
}

#[test]
fn sampler_diagnostics_are_healthy() {
    let t = DiagGaussian {
        mean: vec![0.0; 4],
        sd: vec![1.0, 10.0, 0.1, 3.0],
    };
    let r = mcmc::sample_mcmc(&t, &config(2, 1)).unwrap();
    for (s, sd) in r.summarize().unwrap().iter().zip([1.0, 10.0, 0.1, 3.0]) {
        assert!(s.rhat < 1.05);
        assert!((s.sd / sd - 1.0).abs() < 0.15);
    }
    // the adapted metric tracks the posterior scales
    for m in &r.mass_diag {
        assert!(m[1] > 10.0 * m[0] && m[2] < 0.1 * m[0]);
    }
    assert!((0.6..0.95).contains(&r.accept_rate), "accept {}", r.accept_rate);
}
