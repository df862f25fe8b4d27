#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vcpde::baselines::group_lasso_null_lambda;
use vcpde::gibbs::{BglssConfig, LambdaSpec, Pi0Spec};
use vcpde::library::{Axis, GroupedLinearSystem, Term};
use vcpde::tbglss::{run_tbglss_with, DiscoveryReport, TbglssOptions, ThresholdSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Term list `u^0 .. u^(g-1)`; only used as labels.
pub fn labels(g: usize) -> Vec<Term> {
    (0..g).map(|p| Term::power_derivative(p as u32, 0)).collect()
}

/// One group, `beta.len()` steps, each step a single column with squared norm `n`.
pub struct OrthoGroup {
    pub system: GroupedLinearSystem,
    /// Per-step least-squares estimate `colᵀy / n`.
    pub beta_ls: Vec<f64>,
}

pub fn ortho_single_group(n: usize, beta: &[f64], noise: f64, seed: u64) -> OrthoGroup {
    let mut r = rng(seed);
    let mut blocks = Vec::new();
    let mut targets = Vec::new();
    let mut beta_ls = Vec::new();
    for &b in beta {
        let col = normal_vec(n, &mut r).normalize() * (n as f64).sqrt();
        let y = &col * b + normal_vec(n, &mut r) * noise;
        beta_ls.push(col.dot(&y) / n as f64);
        blocks.push(DMatrix::from_column_slice(n, 1, col.as_slice()));
        targets.push(y);
    }
    let steps = (0..beta.len()).map(|i| i as f64).collect();
    OrthoGroup { system: GroupedLinearSystem::from_blocks(labels(1), Axis::Time, steps, blocks, targets).unwrap(), beta_ls }
}

/// Random dense system with `g` groups and `m` steps of `n` rows; `beta[k][i]`
/// drives the target, plus Gaussian noise.
pub fn random_system(n: usize, g: usize, m: usize, beta: &[Vec<f64>], noise: f64, seed: u64) -> GroupedLinearSystem {
    let mut r = rng(seed);
    let mut blocks = Vec::new();
    let mut targets = Vec::new();
    for i in 0..m {
        let x = DMatrix::from_fn(n, g, |_, _| r.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(g, |k, _| beta[k][i]);
        let y = &x * b + normal_vec(n, &mut r) * noise;
        blocks.push(x);
        targets.push(y);
    }
    let steps = (0..m).map(|i| i as f64).collect();
    GroupedLinearSystem::from_blocks(labels(g), Axis::Time, steps, blocks, targets).unwrap()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Gradient of `½‖y − Xβ‖²` for group `g`, negated: `X_gᵀ(y − Xβ)` per step.
pub fn neg_gradient(sys: &GroupedLinearSystem, beta: &[Vec<f64>], g: usize) -> Vec<f64> {
    sys.grams()
        .iter()
        .enumerate()
        .map(|(i, s)| s.xty[g] - (0..sys.n_groups()).map(|h| s.gram[(g, h)] * beta[h][i]).sum::<f64>())
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest KKT violation relative to λ.
pub fn kkt_violation(sys: &GroupedLinearSystem, beta: &[Vec<f64>], lambda: f64) -> f64 {
    (0..sys.n_groups())
        .map(|g| {
            let c = neg_gradient(sys, beta, g);
            let nb = norm(&beta[g]);
            if nb == 0.0 {
                (norm(&c) - lambda).max(0.0) / lambda
            } else {
                let r: Vec<f64> = c.iter().zip(&beta[g]).map(|(c, b)| c - lambda * b / nb).collect();
                norm(&r) / lambda
            }
        })
        .fold(0.0, f64::max)
}

pub fn random_case(seed: u64) -> (GroupedLinearSystem, f64) {
    let mut r = rng(1000 + seed);
    let beta: Vec<Vec<f64>> =
        (0..5).map(|_| if r.random::<f64>() < 0.5 { vec![0.0; 4] } else { (0..4).map(|_| r.random::<f64>() * 4.0 - 2.0).collect() }).collect();
    let sys = random_system(40, 5, 4, &beta, 0.3, seed).normalize_columns().unwrap();
    let lambda = group_lasso_null_lambda(&sys) * (0.02 + 0.9 * r.random::<f64>());
    (sys, lambda)
}


pub fn toy(seed: u64) -> (GroupedLinearSystem, ThresholdSpec) {
    let mut r = rng(500 + seed);
    let beta: Vec<Vec<f64>> = (0..5)
        .map(|_| match r.random_range(0..3) {
            0 => vec![0.0; 4],
            1 => (0..4).map(|_| 0.05 * r.random::<f64>()).collect(),
            _ => (0..4).map(|_| 1.0 + r.random::<f64>()).collect(),
        })
        .collect();
    let noise = [0.01, 0.1, 0.5][r.random_range(0..3)];
    let sys = random_system(30, 5, 4, &beta, noise, seed).normalize_columns().unwrap();
    let th = ThresholdSpec { t_rms: Some(r.random_range(0.005..0.2)), t_ge: Some(r.random_range(0.01..0.5)) };
    (sys, th)
}

pub fn run_toy(sys: &GroupedLinearSystem, th: ThresholdSpec, seed: u64) -> DiscoveryReport {
    let cfg = BglssConfig::default().with_chain(300, 60).with_seed(seed);
    run_tbglss_with(sys, th, cfg, &TbglssOptions { intermediate_chain: (100, 20), ..Default::default() }).unwrap().report
}

/// Number of updates, removals only, and criteria honoured by the survivors.
pub fn check_loop(rep: &DiscoveryReport, th: ThresholdSpec, g: usize) -> Result<(), String> {
    if rep.n_updates == 0 || rep.n_updates > g + 1 {
        return Err(format!("{} updates for {g} groups", rep.n_updates));
    }
    for w in rep.updates.windows(2) {
        let survivors: Vec<String> = w[0].groups.iter().filter(|c| c.removed.is_none()).map(|c| c.term.to_string()).collect();
        let next: Vec<String> = w[1].groups.iter().map(|c| c.term.to_string()).collect();
        if survivors != next {
            return Err(format!("update input {next:?} is not the previous survivors {survivors:?}"));
        }
        if w[0].n_removed() == 0 {
            return Err("loop continued after an update removed nothing".into());
        }
    }
    let last = rep.updates.last().unwrap();
    let empty = last.groups.iter().all(|c| c.removed.is_some());
    if !empty && last.n_removed() != 0 {
        return Err("final update removed groups but the loop stopped".into());
    }
    for c in &last.groups {
        if c.removed.is_none() {
            if c.rms < th.t_rms.unwrap() {
                return Err(format!("{} kept with rms {}", c.term, c.rms));
            }
            if c.group_error_bar.is_none_or(|e| e > th.t_ge.unwrap()) {
                return Err(format!("{} kept with group error bar {:?}", c.term, c.group_error_bar));
            }
        }
    }
    let kept: Vec<String> = last.groups.iter().filter(|c| c.removed.is_none()).map(|c| c.term.to_string()).collect();
    if kept != rep.selected {
        return Err(format!("selected {:?} but final survivors {kept:?}", rep.selected));
    }
    Ok(())
}


/// `(name, computed, hand value)` for each criterion on three-element inputs.
pub fn criterion_fixtures() -> Vec<(&'static str, f64, f64)> {
    use vcpde::library::CoefficientTrajectories;
    use vcpde::selection::{aic_loss, total_error_bar};
    use vcpde::tbglss::{group_error_bar, rms_criterion};

    let beta = [1.0, 2.0, 2.0];
    let s2 = [0.1, 0.2, 0.3];
    // ‖β‖² = 9, so rms = √(9/3) and the error bar is 0.6/9.
    let rms = rms_criterion(&beta).unwrap();
    let geb = group_error_bar(&beta, &s2).unwrap().unwrap();

    let tr = CoefficientTrajectories {
        terms: labels(3),
        axis: Axis::Time,
        steps: vec![0.0, 1.0, 2.0],
        values: vec![beta.to_vec(), vec![0.0; 3], vec![3.0, 0.0, 4.0]],
        active: vec![true, false, true],
    };
    // 0.6/9 + 0.5/25; the inactive group is skipped.
    let teb = total_error_bar(&tr, &[s2.to_vec(), vec![5.0; 3], vec![0.25, 0.0, 0.25]]).unwrap();

    // One column (1, 2, 2), y = (1, 1, 1), β = 1/3: residual (2/3, 1/3, 1/3),
    // RSS = 2/3, ‖y‖² = 3, so N ln(RSS/‖y‖²/N + ε) + 2k = 3 ln(2/27 + 1e-6) + 2.
    let sys = GroupedLinearSystem::from_blocks(
        labels(1),
        Axis::Time,
        vec![0.0],
        vec![DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0])],
        vec![DVector::from_column_slice(&[1.0, 1.0, 1.0])],
    )
    .unwrap();
    let aic = aic_loss(&sys, &[vec![1.0 / 3.0]], 1, 1e-6).unwrap();
    let aic_null = aic_loss(&sys, &[vec![0.0]], 0, 1e-6).unwrap();

    vec![
        ("rms_criterion", rms, 1.7320508075688772),
        ("group_error_bar", geb, 0.06666666666666667),
        ("total_error_bar", teb, 0.08666666666666667),
        ("aic_loss", aic, -5.808028556606525),
        ("aic_loss null model", aic_null, -3.295827866017829),
    ]
}

/// Spike weight of the marginal conditional
/// `β_g | y ~ l δ0 + (1 − l) N((1 − B) β̂, σ²/n (1 − B) I)`, `B = 1/(1 + nτ²)`.
pub fn spike_weight(n: f64, m: f64, tau2: f64, sigma2: f64, pi0: f64, beta_ls: &[f64]) -> f64 {
    let b = 1.0 / (1.0 + n * tau2);
    let norm2: f64 = beta_ls.iter().map(|v| v * v).sum();
    let ratio = (1.0 + n * tau2).powf(-m / 2.0) * (n * (1.0 - b) * norm2 / (2.0 * sigma2)).exp();
    pi0 / (pi0 + (1.0 - pi0) * ratio)
}

pub fn oracle_config(tau2: f64, sigma2: f64, pi0: f64, draws: usize, seed: u64) -> BglssConfig {
    BglssConfig {
        lambda: LambdaSpec::Fixed(1.0),
        pi0: Pi0Spec::Fixed(pi0),
        fixed_sigma2: Some(sigma2),
        fixed_tau2: Some(tau2),
        ..Default::default()
    }
    .with_chain(draws + 10, 10)
    .with_seed(seed)
}
