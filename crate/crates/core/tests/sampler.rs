mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use vcpde::gibbs::{
    estimate_hyperparams, median_normalized, posterior_median, posterior_variance, sample_posterior, BglssConfig,
    LambdaSpec, Pi0Spec,
};
use vcpde::library::{Axis, GroupedLinearSystem};

#[test]
fn spike_frequency_matches_marginal_weight() {
    let (n, tau2, sigma2, pi0) = (50, 1.0, 0.25, 0.5);
    let g = ortho_single_group(n, &[0.15, -0.1, 0.15], 0.05, 4);
    let l = spike_weight(n as f64, 3.0, tau2, sigma2, pi0, &g.beta_ls);
    assert!(l > 0.1 && l < 0.9, "fixture should be non-degenerate, l = {l}");
    let draws = 20_000;
    let ens = sample_posterior(&g.system, &oracle_config(tau2, sigma2, pi0, draws, 1)).unwrap();
    let freq = ens.spike_frequency(0);
    let se = (l * (1.0 - l) / draws as f64).sqrt();
    assert!((freq - l).abs() < 3.0 * se, "freq {freq} vs l {l} (se {se})");
}

#[test]
fn slab_moments_match_shrunk_least_squares() {
    let (n, tau2, sigma2) = (40, 0.05, 0.5);
    let g = ortho_single_group(n, &[1.0, -0.5, 2.0, 0.3], 0.7, 9);
    let draws = 20_000;
    let ens = sample_posterior(&g.system, &oracle_config(tau2, sigma2, 0.0, draws, 2)).unwrap();
    let b = 1.0 / (1.0 + n as f64 * tau2);
    let want_var = sigma2 / n as f64 * (1.0 - b);
    for (i, &ls) in g.beta_ls.iter().enumerate() {
        let d = ens.coefficient_draws(0, i);
        let want_mean = (1.0 - b) * ls;
        let se_mean = (want_var / draws as f64).sqrt();
        assert!((mean(&d) - want_mean).abs() < 3.0 * se_mean, "step {i}: mean {} vs {want_mean}", mean(&d));
        let se_var = want_var * (2.0 / (draws as f64 - 1.0)).sqrt();
        assert!((var(&d) - want_var).abs() < 3.0 * se_var, "step {i}: var {} vs {want_var}", var(&d));
    }
    let s2 = posterior_variance(&ens).unwrap();
    let avg = mean(&s2[0]);
    assert!((avg / want_var - 1.0).abs() < 0.1);
}

#[test]
fn slab_draws_uncorrelated_within_group() {
    let (n, tau2, sigma2) = (30, 1.0, 1.0);
    let g = ortho_single_group(n, &[1.0, 1.0, -1.0], 1.0, 5);
    let draws = 10_000;
    let ens = sample_posterior(&g.system, &oracle_config(tau2, sigma2, 0.0, draws, 3)).unwrap();
    let se = 1.0 / (draws as f64).sqrt();
    for a in 0..3 {
        for b in a + 1..3 {
            let (x, y) = (ens.coefficient_draws(0, a), ens.coefficient_draws(0, b));
            let (mx, my) = (mean(&x), mean(&y));
            let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (draws as f64 - 1.0);
            let corr = cov / (var(&x) * var(&y)).sqrt();
            assert!(corr.abs() < 3.0 * se, "corr({a},{b}) = {corr}");
        }
    }
}

#[test]
fn spike_slab_exclusivity_every_draw() {
    let beta = vec![vec![1.0; 6], vec![0.0; 6], vec![0.05; 6], vec![0.0; 6]];
    let sys = random_system(25, 4, 6, &beta, 0.5, 8).normalize_columns().unwrap();
    let ens = sample_posterior(&sys, &BglssConfig::default().with_chain(300, 50).with_seed(5)).unwrap();
    for d in 0..ens.n_draws() {
        for g in 0..4 {
            let zeros = (0..6).filter(|&i| ens.beta(d, g, i) == 0.0).count();
            assert!(zeros == 0 || zeros == 6, "draw {d} group {g} has {zeros} zeros");
            assert_eq!(zeros == 0, ens.slab()[d][g]);
        }
    }
    assert_eq!(ens.n_draws(), 250);
}

#[test]
fn least_squares_limit() {
    let beta = vec![vec![1.0, 2.0, -1.0], vec![0.5, 0.0, 0.3], vec![-2.0, 1.0, 1.0]];
    let sys = random_system(60, 3, 3, &beta, 1e-3, 21).normalize_columns().unwrap();
    let cfg = BglssConfig { lambda: LambdaSpec::Fixed(1e-6), pi0: Pi0Spec::Fixed(0.0), ..Default::default() }
        .with_chain(1500, 300)
        .with_seed(4);
    let ens = sample_posterior(&sys, &cfg).unwrap();
    let med = median_normalized(&ens).unwrap();
    let ls = sys.least_squares(&[0, 1, 2]).unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) = (med.concat(), ls.concat());
    assert!(rel_l2(&a, &b) < 1e-2, "rel {}", rel_l2(&a, &b));
}

/// `u_t = 2u` sampled on `n` points per step, tiny noise.
fn growth_system(n: usize, seed: u64) -> GroupedLinearSystem {
    let mut r = rng(seed);
    let m = 8;
    let mut blocks = Vec::new();
    let mut targets = Vec::new();
    for i in 0..m {
        let u = DVector::from_fn(n, |k, _| ((k as f64 + 0.5) / n as f64 * 6.0 + i as f64 * 0.1).sin());
        targets.push(&u * 2.0 + normal_vec(n, &mut r) * 1e-3);
        blocks.push(DMatrix::from_column_slice(n, 1, u.as_slice()));
    }
    GroupedLinearSystem::from_blocks(labels(1), Axis::Time, (0..m).map(|i| i as f64).collect(), blocks, targets)
        .unwrap()
}

#[test]
fn posterior_contracts_with_more_rows() {
    let mut last = f64::INFINITY;
    for n in [32, 64, 128] {
        let sys = growth_system(n, 3).normalize_columns().unwrap();
        let cfg = BglssConfig { pi0: Pi0Spec::Fixed(0.5), ..Default::default() }.with_chain(600, 100).with_seed(7);
        let ens = sample_posterior(&sys, &cfg).unwrap();
        let med = posterior_median(&ens).unwrap();
        assert!(med.values[0].iter().all(|v| (v - 2.0).abs() < 1e-3), "n = {n}: {:?}", med.values[0]);
        let s2 = ens.layout.physical_variance(&posterior_variance(&ens).unwrap());
        let avg = mean(&s2[0]);
        assert!(avg < last, "n = {n}: {avg} !< {last}");
        last = avg;
    }
    assert!(last < 1e-6);
}

#[test]
fn pi0_estimate_on_pure_noise() {
    let beta = vec![vec![0.0; 5]; 20];
    let sys = random_system(40, 20, 5, &beta, 1.0, 13).normalize_columns().unwrap();
    let h = estimate_hyperparams(&sys, &BglssConfig::default().with_seed(1)).unwrap();
    assert!(h.pi0 >= 0.9, "pi0 {}", h.pi0);
}

#[test]
fn pi0_estimate_with_known_sparsity() {
    let mut beta = vec![vec![0.0; 5]; 20];
    beta[3] = vec![2.0, 1.5, 1.0, 1.5, 2.0];
    beta[11] = vec![-1.0, -1.0, -2.0, -1.0, -1.0];
    let sys = random_system(40, 20, 5, &beta, 0.1, 17).normalize_columns().unwrap();
    let h = estimate_hyperparams(&sys, &BglssConfig::default().with_seed(2)).unwrap();
    assert!((0.8..=0.95).contains(&h.pi0), "pi0 {}", h.pi0);
    assert!(h.lambda > 0.0 && h.lambda.is_finite());
}

#[test]
fn pi0_one_forces_the_null_model() {
    let beta = vec![vec![3.0; 4], vec![-2.0; 4]];
    let sys = random_system(30, 2, 4, &beta, 0.1, 2).normalize_columns().unwrap();
    let cfg = BglssConfig { pi0: Pi0Spec::Fixed(1.0), lambda: LambdaSpec::Fixed(1.0), ..Default::default() }
        .with_chain(200, 20)
        .with_seed(6);
    let ens = sample_posterior(&sys, &cfg).unwrap();
    for d in 0..ens.n_draws() {
        assert!(ens.slab()[d].iter().all(|s| !s));
        for g in 0..2 {
            for i in 0..4 {
                assert_eq!(ens.beta(d, g, i), 0.0);
            }
        }
    }
    assert_eq!(ens.spike_frequency(0), 1.0);
}
