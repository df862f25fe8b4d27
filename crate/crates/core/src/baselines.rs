//! Sequential grouped threshold ridge regression (SGTR) and group lasso by
//! block coordinate descent. Both work from per-step Gram matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::library::{CoefficientTrajectories, GroupedLinearSystem, StepGram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgtrConfig {
    /// Ridge penalty; `None` uses `1e-5 ×` the mean Gram diagonal.
    pub ridge: Option<f64>,
    /// Groups with RMS below this are dropped.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Normalize columns first when the system is not normalized already.
    pub normalize: bool,
}

impl Default for SgtrConfig {
    fn default() -> Self {
        Self { ridge: None, threshold: 0.01, max_iterations: 50, normalize: true }
    }
}

impl SgtrConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.ridge {
            if !(r >= 0.0 && r.is_finite()) {
                return invalid(format!("ridge penalty must be nonnegative, got {r}"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return invalid(format!("SGTR threshold must be positive, got {}", self.threshold));
        }
        if self.max_iterations == 0 {
            return invalid("SGTR needs at least one iteration");
        }
        Ok(())
    }
}

/// A baseline fit: coefficients on the scale of the fitted system plus physical trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub method: String,
    /// `beta[g][i]` on the fitted system's column scale.
    pub beta: Vec<Vec<f64>>,
    pub trajectories: CoefficientTrajectories,
    pub iterations: usize,
    pub converged: bool,
    pub empty_model: bool,
}

fn mean_gram_diagonal(grams: &[StepGram]) -> f64 {
    let (sum, n) = grams
        .iter()
        .fold((0.0, 0usize), |(s, n), g| (s + g.gram.diagonal().sum(), n + g.gram.nrows()));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Per-step ridge solves restricted to `groups`.
fn ridge(grams: &[StepGram], groups: &[usize], lambda: f64, n_groups: usize) -> Result<Vec<Vec<f64>>> {
    let m = grams.len();
    let mut beta = vec![vec![0.0; m]; n_groups];
    if groups.is_empty() {
        return Ok(beta);
    }
    let k = groups.len();
    for (i, sg) in grams.iter().enumerate() {
        let a = DMatrix::from_fn(k, k, |r, c| sg.gram[(groups[r], groups[c])] + if r == c { lambda } else { 0.0 });
        let b = DVector::from_fn(k, |r, _| sg.xty[groups[r]]);
        let chol = a.cholesky().ok_or(Error::SingularGram { step: i })?;
        // Cholesky succeeds on some numerically singular matrices; reject those too.
        let diag_min = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let diag_max = chol.l_dirty().diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(diag_min > 1e-8 * diag_max) {
            return Err(Error::SingularGram { step: i });
        }
        let sol = chol.solve(&b);
        for (r, &g) in groups.iter().enumerate() {
            beta[g][i] = sol[r];
        }
    }
    Ok(beta)
}

/// SGTR: ridge fit, drop groups with RMS below the threshold, refit on the
/// survivors, until nothing more is dropped.
pub fn sgtr(system: &GroupedLinearSystem, config: &SgtrConfig) -> Result<BaselineFit> {
    config.validate()?;
    let normalized;
    let sys = if config.normalize && !system.is_normalized() {
        normalized = system.normalize_columns()?;
        &normalized
    } else {
        system
    };
    let grams = sys.grams();
    let lambda = config.ridge.unwrap_or_else(|| 1e-5 * mean_gram_diagonal(&grams));
    let gn = sys.n_groups();
    let mut active: Vec<usize> = (0..gn).collect();
    let mut beta = ridge(&grams, &active, lambda, gn)?;
    let mut iterations = 1;
    let mut converged = false;
    while iterations <= config.max_iterations {
        let keep: Vec<usize> = active.iter().copied().filter(|&g| rms(&beta[g]) >= config.threshold).collect();
        if keep.len() == active.len() {
            converged = true;
            break;
        }
        active = keep;
        beta = ridge(&grams, &active, lambda, gn)?;
        iterations += 1;
    }
    let trajectories = CoefficientTrajectories::from_normalized(sys, &beta);
    Ok(BaselineFit {
        method: "sgtr".into(),
        empty_model: active.is_empty(),
        beta,
        trajectories,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupLassoConfig {
    pub lambda: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for GroupLassoConfig {
    fn default() -> Self {
        Self { lambda: 1.0, tolerance: 1e-6, max_sweeps: 10_000 }
    }
}

impl GroupLassoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return invalid(format!("group lasso penalty must be positive, got {}", self.lambda));
        }
        if !(self.tolerance > 0.0) {
            return invalid("tolerance must be positive");
        }
        if self.max_sweeps == 0 {
            return invalid("max sweeps must be positive");
        }
        Ok(())
    }
}

/// Smallest penalty that zeroes every group: `max_g ‖X_gᵀy‖₂`.
pub fn group_lasso_null_lambda(system: &GroupedLinearSystem) -> f64 {
    let grams = system.grams();
    (0..system.n_groups())
        .map(|g| grams.iter().map(|s| s.xty[g].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// `½‖y − Xβ‖² + λ Σ_g ‖β_g‖₂`.
pub fn group_lasso_objective(system: &GroupedLinearSystem, beta: &[Vec<f64>], lambda: f64) -> f64 {
    let pen: f64 = beta.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
    0.5 * system.rss(beta) + lambda * pen
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLassoFit {
    pub fit: BaselineFit,
    pub sweeps: usize,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

/// Block coordinate descent with the group soft-threshold update. Converged
/// when the largest block change in a sweep is below the tolerance; otherwise
/// the last iterate is returned with `converged = false`.
pub fn group_lasso(system: &GroupedLinearSystem, config: &GroupLassoConfig) -> Result<GroupLassoFit> {
    config.validate()?;
    if !system.is_normalized() {
        return invalid("group lasso expects a column-normalized system");
    }
    let grams = system.grams();
    let (gn, m) = (system.n_groups(), system.n_steps());
    let mut beta = vec![vec![0.0; m]; gn];
    let mut q: Vec<DVector<f64>> = vec![DVector::zeros(gn); m];
    let mut objective = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let mut z = vec![0.0; m];
    let yy: f64 = grams.iter().map(|s| s.yty).sum();
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for g in 0..gn {
            let lip = grams.iter().map(|s| s.gram[(g, g)]).fold(0.0, f64::max);
            if lip <= 0.0 {
                continue;
            }
            for i in 0..m {
                z[i] = beta[g][i] + (grams[i].xty[g] - q[i][g]) / lip;
            }
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let shrink = if norm > 0.0 { (1.0 - config.lambda / (lip * norm)).max(0.0) } else { 0.0 };
            let mut change: f64 = 0.0;
            for i in 0..m {
                let new = shrink * z[i];
                let d = new - beta[g][i];
                if d != 0.0 {
                    q[i].axpy(d, &grams[i].gram.column(g), 1.0);
                    beta[g][i] = new;
                    change = change.max(d.abs());
                }
            }
            max_change = max_change.max(change);
        }
        // Objective from Gram statistics: ½(yᵀy − 2βᵀc + βᵀAβ) + λΣ‖β_g‖.
        let mut quad = yy;
        for i in 0..m {
            for g in 0..gn {
                let b = beta[g][i];
                if b != 0.0 {
                    quad += b * (q[i][g] - 2.0 * grams[i].xty[g]);
                }
            }
        }
        let pen: f64 = beta.iter().map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt()).sum();
        objective.push(0.5 * quad.max(0.0) + config.lambda * pen);
        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }
    let trajectories = CoefficientTrajectories::from_normalized(system, &beta);
    Ok(GroupLassoFit {
        fit: BaselineFit {
            method: "group_lasso".into(),
            empty_model: trajectories.n_active() == 0,
            beta,
            trajectories,
            iterations: sweeps,
            converged,
        },
        sweeps,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::{Axis, Term};

    fn system(seed: u64) -> GroupedLinearSystem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (n, g, m) = (30, 4, 3);
        let blocks: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::from_fn(n, g, |_, _| rng.random::<f64>() - 0.5)).collect();
        let targets = blocks.iter().map(|b| b.column(0) * 2.0 - b.column(2) * 0.5).collect();
        let terms = (0..g).map(|p| Term::power_derivative(p as u32, 0)).collect();
        GroupedLinearSystem::from_blocks(terms, Axis::Time, vec![0.0, 1.0, 2.0], blocks, targets).unwrap()
    }

    #[test]
    fn sgtr_threshold_above_everything_gives_empty_model() {
        let s = system(1).normalize_columns().unwrap();
        let fit = sgtr(&s, &SgtrConfig { threshold: 1e6, ..Default::default() }).unwrap();
        assert!(fit.empty_model);
        assert!(fit.beta.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn sgtr_singular_gram_without_ridge() {
        let mut s = system(2);
        let blocks: Vec<DMatrix<f64>> = (0..3)
            .map(|i| {
                let mut b = s.block(i).clone();
                let c = b.column(0).clone_owned();
                b.set_column(1, &(c * 3.0));
                b
            })
            .collect();
        let targets = (0..3).map(|i| s.target(i).clone()).collect();
        s = GroupedLinearSystem::from_blocks(s.terms().to_vec(), Axis::Time, s.steps().to_vec(), blocks, targets).unwrap();
        let cfg = SgtrConfig { ridge: Some(0.0), normalize: false, ..Default::default() };
        assert!(matches!(sgtr(&s, &cfg), Err(Error::SingularGram { .. })));
        assert!(sgtr(&s, &SgtrConfig { ridge: Some(1e-3), ..cfg }).is_ok());
    }

    #[test]
    fn group_lasso_null_threshold() {
        let s = system(3).normalize_columns().unwrap();
        let lmax = group_lasso_null_lambda(&s);
        let fit = group_lasso(&s, &GroupLassoConfig { lambda: lmax * 1.0001, ..Default::default() }).unwrap();
        assert!(fit.fit.empty_model);
        let fit = group_lasso(&s, &GroupLassoConfig { lambda: lmax * 0.5, ..Default::default() }).unwrap();
        assert!(!fit.fit.empty_model);
    }

    #[test]
    fn group_lasso_rejects_unnormalized() {
        assert!(group_lasso(&system(4), &GroupLassoConfig::default()).is_err());
    }
}
