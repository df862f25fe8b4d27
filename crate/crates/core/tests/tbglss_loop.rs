mod common;

use common::*;
use vcpde::tbglss::ThresholdSpec;

#[test]
fn loop_properties_on_random_toys() {
    for seed in 0..40 {
        let (sys, th) = toy(seed);
        let rep = run_toy(&sys, th, seed);
        check_loop(&rep, th, 5).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert_eq!(rep.trajectories.terms.len(), 5);
        for (g, a) in rep.trajectories.active.iter().enumerate() {
            if !a {
                assert!(rep.trajectories.values[g].iter().all(|&v| v == 0.0));
                assert!(rep.variance[g].iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn fixed_seed_is_deterministic() {
    for seed in 0..10 {
        let (sys, th) = toy(seed);
        assert_eq!(run_toy(&sys, th, seed), run_toy(&sys, th, seed), "seed {seed}");
    }
}

#[test]
fn strong_groups_survive_and_null_groups_go() {
    let beta = vec![vec![2.0, 2.2, 1.8, 2.0], vec![0.0; 4], vec![-1.0, -1.1, -0.9, -1.0], vec![0.0; 4], vec![0.0; 4]];
    let sys = random_system(40, 5, 4, &beta, 0.05, 77).normalize_columns().unwrap();
    let th = ThresholdSpec { t_rms: Some(0.02), t_ge: Some(0.1) };
    let rep = run_toy(&sys, th, 3);
    assert_eq!(rep.trajectories.active, vec![true, false, true, false, false]);
    for (g, b) in beta.iter().enumerate() {
        for i in 0..4 {
            assert!((rep.trajectories.values[g][i] - b[i]).abs() < 0.05);
        }
    }
}

#[test]
fn impossible_thresholds_give_the_empty_model() {
    let (sys, _) = toy(1);
    let th = ThresholdSpec { t_rms: Some(1e6), t_ge: None };
    let rep = run_toy(&sys, th, 1);
    assert!(rep.empty_model);
    assert!(rep.selected.is_empty());
    assert_eq!(rep.n_updates, 1);
    assert!(rep.loss.is_finite());
}
