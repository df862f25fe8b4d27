mod common;

use common::*;
use vcpde::baselines::{group_lasso, group_lasso_null_lambda, group_lasso_objective, sgtr, GroupLassoConfig, SgtrConfig};

#[test]
fn group_lasso_kkt_on_random_systems() {
    for seed in 0..50 {
        let (sys, lambda) = random_case(seed);
        let fit = group_lasso(&sys, &GroupLassoConfig { lambda, tolerance: 1e-10, max_sweeps: 100_000 }).unwrap();
        assert!(fit.fit.converged, "seed {seed}");
        let v = kkt_violation(&sys, &fit.fit.beta, lambda);
        assert!(v < 1e-6, "seed {seed}: KKT violation {v}");
    }
}

#[test]
fn group_lasso_objective_monotone() {
    for seed in 0..50 {
        let (sys, lambda) = random_case(seed);
        let fit = group_lasso(&sys, &GroupLassoConfig { lambda, tolerance: 1e-10, max_sweeps: 100_000 }).unwrap();
        for w in fit.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs().max(1.0), "seed {seed}: {} -> {}", w[0], w[1]);
        }
        let last = *fit.objective.last().unwrap();
        let direct = group_lasso_objective(&sys, &fit.fit.beta, lambda);
        assert!((last - direct).abs() < 1e-8 * direct.max(1.0), "seed {seed}: {last} vs {direct}");
    }
}

#[test]
fn group_lasso_null_lambda_zeroes_everything() {
    let (sys, _) = random_case(3);
    let l0 = group_lasso_null_lambda(&sys);
    let fit = group_lasso(&sys, &GroupLassoConfig { lambda: l0 * 1.0001, ..Default::default() }).unwrap();
    assert!(fit.fit.empty_model);
    let fit = group_lasso(&sys, &GroupLassoConfig { lambda: l0 * 0.9, ..Default::default() }).unwrap();
    assert!(!fit.fit.empty_model);
}

#[test]
fn sgtr_recovers_exact_support() {
    let beta = vec![vec![1.0, 1.2, 0.8, 1.1], vec![0.0; 4], vec![-0.5, -0.6, -0.4, -0.5], vec![0.0; 4], vec![0.0; 4]];
    let sys = random_system(60, 5, 4, &beta, 1e-4, 31).normalize_columns().unwrap();
    let fit = sgtr(&sys, &SgtrConfig { threshold: 0.05, ..Default::default() }).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.trajectories.active, vec![true, false, true, false, false]);
    for (g, b) in beta.iter().enumerate() {
        for i in 0..4 {
            assert!((fit.trajectories.values[g][i] - b[i]).abs() < 1e-3, "g {g} step {i}");
        }
    }
}

#[test]
fn sgtr_result_is_a_fixed_point() {
    for seed in 0..20 {
        let (sys, _) = random_case(seed);
        let cfg = SgtrConfig { threshold: 0.1, ..Default::default() };
        let fit = sgtr(&sys, &cfg).unwrap();
        let kept: Vec<usize> = (0..5).filter(|&g| fit.trajectories.active[g]).collect();
        if kept.is_empty() {
            continue;
        }
        // Refitting on the survivors drops nothing and gives the same coefficients.
        let sub = sys.select_groups(&kept).unwrap();
        let again = sgtr(&sub, &cfg).unwrap();
        assert!(again.trajectories.active.iter().all(|&a| a), "seed {seed}");
        for (j, &g) in kept.iter().enumerate() {
            for i in 0..4 {
                let (a, b) = (again.beta[j][i], fit.beta[g][i]);
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "seed {seed}");
            }
        }
        for g in kept {
            let rms = norm(&fit.beta[g]) / 2.0;
            assert!(rms >= cfg.threshold, "seed {seed}: kept group with rms {rms}");
        }
    }
}
