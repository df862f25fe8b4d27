mod common;

use common::*;
use proptest::prelude::*;
use vcpde::library::{Axis, CoefficientTrajectories};
use vcpde::pde_solvers::TrueCoefficients;
use vcpde::selection::{aic_from_residual, coefficient_mse, logspace, sweep, SweepAxis, SweepMethod};
use vcpde::baselines::GroupLassoConfig;

#[test]
fn criteria_match_hand_values() {
    for (name, got, want) in criterion_fixtures() {
        assert!((got - want).abs() <= 1e-12, "{name}: {got} vs {want}");
    }
}

#[test]
fn coefficient_mse_counts_every_cell() {
    let est = CoefficientTrajectories {
        terms: labels(3),
        axis: Axis::Time,
        steps: vec![0.0, 1.0],
        values: vec![vec![1.0, 1.0], vec![0.5, 0.0], vec![0.0, 0.0]],
        active: vec![true, true, false],
    };
    let truth = TrueCoefficients { terms: vec![labels(3)[0].clone()], axis: Axis::Time, steps: vec![0.0, 1.0], values: vec![vec![1.0, 2.0]] };
    // squared errors: 0, 1, 0.25, 0, 0, 0 over 6 cells.
    assert!((coefficient_mse(&est, &truth).unwrap() - 1.25 / 6.0).abs() < 1e-15);
    let missing = TrueCoefficients { terms: vec![absent_term()], ..truth.clone() };
    assert!(coefficient_mse(&est, &missing).is_err());
    let shifted = TrueCoefficients { steps: vec![0.0, 1.5], ..truth };
    assert!(coefficient_mse(&est, &shifted).is_err());
}

fn absent_term() -> vcpde::library::Term {
    vcpde::library::Term::power_derivative(2, 3)
}

#[test]
fn group_lasso_sweep_argmins() {
    let beta = vec![vec![1.0, 1.1, 0.9, 1.0], vec![0.0; 4], vec![-0.6, -0.5, -0.6, -0.5], vec![0.0; 4], vec![0.0; 4]];
    let sys = random_system(60, 5, 4, &beta, 0.05, 4).normalize_columns().unwrap();
    let grid = logspace(1e-3, 10.0, 12);
    let curve = sweep(&sys, SweepAxis::Lambda, &grid, &SweepMethod::GroupLasso { config: GroupLassoConfig::default() }, None).unwrap();
    assert_eq!(curve.points.len(), 12);
    assert!(curve.points.iter().all(|p| p.error.is_none() && p.total_error_bar.is_none() && p.coefficient_mse.is_none()));
    let i = curve.argmin_loss.unwrap();
    let best = curve.points[i].loss.unwrap();
    assert!(curve.points.iter().all(|p| p.loss.unwrap() >= best));
    assert_eq!(curve.argmin_coefficient_mse, None);
    // Larger penalties never keep more groups here.
    let sizes: Vec<usize> = curve.points.iter().map(|p| p.support.len()).collect();
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    assert!(sweep(&sys, SweepAxis::Lambda, &[0.1, 0.1], &SweepMethod::GroupLasso { config: GroupLassoConfig::default() }, None).is_err());
    assert!(sweep(&sys, SweepAxis::TGe, &[0.1], &SweepMethod::GroupLasso { config: GroupLassoConfig::default() }, None)
        .unwrap()
        .points[0]
        .error
        .is_some());
}

proptest! {
    #[test]
    fn aic_is_additive_in_k(rss in 0.0f64..10.0, n in 1usize..100_000, k in 0usize..500, j in 0usize..500, eps in 1e-9f64..1e-3) {
        let d = aic_from_residual(rss, n, k + j, eps) - aic_from_residual(rss, n, k, eps);
        prop_assert!((d - 2.0 * j as f64).abs() < 1e-6 * (1.0 + aic_from_residual(rss, n, k, eps).abs()));
    }

    #[test]
    fn aic_splits_into_fit_and_penalty(rss in 0.0f64..10.0, n in 1usize..100_000, k in 0usize..500, eps in 1e-9f64..1e-3) {
        let nf = n as f64;
        let want = nf * (rss / nf + eps).ln() + 2.0 * k as f64;
        prop_assert!((aic_from_residual(rss, n, k, eps) - want).abs() <= 1e-9 * want.abs().max(1.0));
        // ε bounds the loss from below.
        prop_assert!(aic_from_residual(rss, n, k, eps) >= nf * eps.ln() + 2.0 * k as f64 - 1e-9 * nf);
    }

    #[test]
    fn aic_increases_with_residual(a in 0.0f64..5.0, b in 0.0f64..5.0, n in 1usize..10_000) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(aic_from_residual(lo, n, 3, 1e-6) <= aic_from_residual(hi, n, 3, 1e-6));
    }
}
