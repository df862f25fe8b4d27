//! Model-selection criteria and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineFit, GroupLassoConfig, SgtrConfig};
use crate::error::{invalid, Error, Result};
use crate::gibbs::BglssConfig;
use crate::library::{CoefficientTrajectories, GroupedLinearSystem};
use crate::pde_solvers::TrueCoefficients;
use crate::tbglss::{self, TbglssOptions, ThresholdSpec};

/// Default ε of the loss.
pub const EPSILON: f64 = 1e-6;

/// `N ln(‖X̃β − ỹ‖²/N + ε) + 2k` with `ỹ = y/‖y‖`, `N` the number of rows and
/// `β` the coefficients of the system's (normalized) columns fitted to `y`.
pub fn aic_loss(system: &GroupedLinearSystem, beta: &[Vec<f64>], k: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return invalid("epsilon must be positive");
    }
    if beta.len() != system.n_groups() || beta.iter().any(|b| b.len() != system.n_steps()) {
        return Err(Error::Shape(format!("coefficients do not match {} groups x {} steps", system.n_groups(), system.n_steps())));
    }
    let yy = system.target_norm_squared();
    let rss = if system.n_groups() == 0 { yy } else { system.rss(beta) };
    let rel = if yy > 0.0 { rss / yy } else { rss };
    Ok(aic_from_residual(rel, system.n_rows(), k, epsilon))
}

/// The loss from an already normalized residual sum of squares.
pub fn aic_from_residual(rss: f64, n: usize, k: usize, epsilon: f64) -> f64 {
    let n = n as f64;
    n * (rss / n + epsilon).ln() + 2.0 * k as f64
}

/// Sum of group error bars over active groups.
pub fn total_error_bar(tr: &CoefficientTrajectories, s2: &[Vec<f64>]) -> Result<f64> {
    if s2.len() != tr.values.len() {
        return Err(Error::Shape(format!("{} variance groups for {} trajectories", s2.len(), tr.values.len())));
    }
    let mut total = 0.0;
    for (g, (v, s)) in tr.values.iter().zip(s2).enumerate() {
        if !tr.active[g] {
            continue;
        }
        total += tbglss::group_error_bar(v, s)?.ok_or(Error::InconsistentMask(g))?;
    }
    Ok(total)
}

/// Total error bar over every group of `beta`; all must have nonzero norm.
pub(crate) fn total_error_bar_raw(beta: &[Vec<f64>], s2: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (g, (b, s)) in beta.iter().zip(s2).enumerate() {
        total += tbglss::group_error_bar(b, s)?.ok_or(Error::InconsistentMask(g))?;
    }
    Ok(total)
}

/// Mean squared coefficient error over every (term, step) of the estimate's
/// library; terms missing from the truth count as zero.
pub fn coefficient_mse(est: &CoefficientTrajectories, truth: &TrueCoefficients) -> Result<f64> {
    let m = est.steps.len();
    if truth.steps.len() != m || est.steps.iter().zip(&truth.steps).any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + b.abs())) {
        return Err(Error::Shape("estimate and truth use different step grids".into()));
    }
    for (t, v) in truth.terms.iter().zip(&truth.values) {
        if !est.terms.contains(t) && v.iter().any(|&c| c != 0.0) {
            return Err(Error::MissingTerm(t.to_string()));
        }
    }
    let mut sum = 0.0;
    for (t, v) in est.terms.iter().zip(&est.values) {
        let tv = truth.terms.iter().position(|s| s == t).map(|g| &truth.values[g]);
        for i in 0..m {
            let want = tv.map_or(0.0, |tv| tv[i]);
            sum += (v[i] - want).powi(2);
        }
    }
    Ok(sum / (est.terms.len() * m) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TRms,
    TGe,
    Lambda,
    SgtrThreshold,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t_rms" => Ok(Self::TRms),
            "t_ge" => Ok(Self::TGe),
            "lambda" => Ok(Self::Lambda),
            "sgtr_threshold" => Ok(Self::SgtrThreshold),
            _ => invalid(format!("unknown sweep axis `{s}` (t_rms, t_ge, lambda, sgtr_threshold)")),
        }
    }
}

/// Method and the parameters held fixed during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SweepMethod {
    Tbglss { thresholds: ThresholdSpec, config: BglssConfig, options: TbglssOptions },
    Sgtr { config: SgtrConfig },
    GroupLasso { config: GroupLassoConfig },
}

impl SweepMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tbglss { .. } => "tbglss",
            Self::Sgtr { .. } => "sgtr",
            Self::GroupLasso { .. } => "group_lasso",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub error: Option<String>,
    pub loss: Option<f64>,
    pub total_error_bar: Option<f64>,
    pub coefficient_mse: Option<f64>,
    pub support: Vec<String>,
    pub trajectories: Option<CoefficientTrajectories>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub axis: SweepAxis,
    pub method: String,
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    /// Grid indices minimizing each criterion.
    pub argmin_loss: Option<usize>,
    pub argmin_total_error_bar: Option<usize>,
    pub argmin_coefficient_mse: Option<usize>,
}

fn argmin(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    values
        .enumerate()
        .filter_map(|(i, v)| v.filter(|x| x.is_finite()).map(|x| (i, x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

impl SelectionCurve {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per grid point.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["value", "loss", "total_error_bar", "coefficient_mse", "n_terms", "support", "error"])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for p in &self.points {
            w.write_record([
                format!("{:e}", p.value),
                f(p.loss),
                f(p.total_error_bar),
                f(p.coefficient_mse),
                p.support.len().to_string(),
                p.support.join(" + "),
                p.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` points from `lo` to `hi` inclusive, evenly spaced in log10.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    crate::field::linspace(lo.log10(), hi.log10(), n).into_iter().map(|e| 10f64.powf(e)).collect()
}

/// Default grid for a sweep axis on `system` (normalized).
pub fn default_grid(axis: SweepAxis, system: &GroupedLinearSystem) -> Vec<f64> {
    match axis {
        SweepAxis::TRms => logspace(1e-3, 1.0, 20),
        SweepAxis::TGe => crate::field::linspace(0.02, 0.22, 11),
        SweepAxis::Lambda => {
            let lmax = baselines::group_lasso_null_lambda(system);
            logspace(lmax * 1e-4, lmax, 20)
        }
        SweepAxis::SgtrThreshold => logspace(1e-4, 1.0, 20),
    }
}

/// Loss of a baseline fit on the normalized system it was fitted to.
pub fn baseline_loss(system: &GroupedLinearSystem, fit: &BaselineFit, epsilon: f64) -> Result<f64> {
    let k = fit.trajectories.n_active() * system.n_steps();
    aic_loss(system, &fit.beta, k, epsilon)
}

fn run_point(
    system: &GroupedLinearSystem,
    axis: SweepAxis,
    value: f64,
    method: &SweepMethod,
    truth: Option<&TrueCoefficients>,
) -> Result<SweepPoint> {
    let (tr, loss, teb) = match (axis, method) {
        (SweepAxis::TRms | SweepAxis::TGe, SweepMethod::Tbglss { thresholds, config, options }) => {
            let mut th = *thresholds;
            match axis {
                SweepAxis::TRms => th.t_rms = Some(value),
                _ => th.t_ge = Some(value),
            }
            let out = tbglss::run_tbglss_with(system, th, *config, options)?;
            (out.report.trajectories, out.report.loss, Some(out.report.total_error_bar))
        }
        (SweepAxis::SgtrThreshold, SweepMethod::Sgtr { config }) => {
            let fit = baselines::sgtr(system, &SgtrConfig { threshold: value, ..*config })?;
            let loss = baseline_loss(system, &fit, EPSILON)?;
            (fit.trajectories, loss, None)
        }
        (SweepAxis::Lambda, SweepMethod::GroupLasso { config }) => {
            let fit = baselines::group_lasso(system, &GroupLassoConfig { lambda: value, ..*config })?.fit;
            let loss = baseline_loss(system, &fit, EPSILON)?;
            (fit.trajectories, loss, None)
        }
        _ => return invalid(format!("axis {axis:?} does not apply to {}", method.name())),
    };
    let mse = truth.map(|t| coefficient_mse(&tr, t)).transpose()?;
    Ok(SweepPoint {
        value,
        error: None,
        loss: Some(loss),
        total_error_bar: teb,
        coefficient_mse: mse,
        support: tr.support().iter().map(|t| t.to_string()).collect(),
        trajectories: Some(tr),
    })
}

/// Runs `method` at every grid value. Failures at single points are recorded, not raised.
pub fn sweep(
    system: &GroupedLinearSystem,
    axis: SweepAxis,
    grid: &[f64],
    method: &SweepMethod,
    truth: Option<&TrueCoefficients>,
) -> Result<SelectionCurve> {
    if grid.is_empty() {
        return invalid("sweep grid is empty");
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("sweep grid must be strictly increasing");
    }
    if !system.is_normalized() {
        return invalid("sweeps expect a column-normalized system");
    }
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&v| {
            run_point(system, axis, v, method, truth).unwrap_or_else(|e| SweepPoint {
                value: v,
                error: Some(e.to_string()),
                loss: None,
                total_error_bar: None,
                coefficient_mse: None,
                support: vec![],
                trajectories: None,
            })
        })
        .collect();
    Ok(SelectionCurve {
        axis,
        method: method.name().into(),
        grid: grid.to_vec(),
        argmin_loss: argmin(points.iter().map(|p| p.loss)),
        argmin_total_error_bar: argmin(points.iter().map(|p| p.total_error_bar)),
        argmin_coefficient_mse: argmin(points.iter().map(|p| p.coefficient_mse)),
        points,
    })
}

/// SGTR at the threshold with the lowest loss over `grid`.
pub fn best_sgtr(system: &GroupedLinearSystem, grid: &[f64], base: &SgtrConfig) -> Result<(BaselineFit, SelectionCurve)> {
    let curve = sweep(system, SweepAxis::SgtrThreshold, grid, &SweepMethod::Sgtr { config: *base }, None)?;
    let i = curve.argmin_loss.ok_or_else(|| Error::InvalidArgument("no SGTR grid point succeeded".into()))?;
    let fit = baselines::sgtr(system, &SgtrConfig { threshold: grid[i], ..*base })?;
    Ok((fit, curve))
}

/// Group lasso at the penalty with the lowest loss over `grid`.
pub fn best_group_lasso(
    system: &GroupedLinearSystem,
    grid: &[f64],
    base: &GroupLassoConfig,
) -> Result<(BaselineFit, SelectionCurve)> {
    let curve = sweep(system, SweepAxis::Lambda, grid, &SweepMethod::GroupLasso { config: *base }, None)?;
    let i = curve.argmin_loss.ok_or_else(|| Error::InvalidArgument("no group lasso grid point succeeded".into()))?;
    let fit = baselines::group_lasso(system, &GroupLassoConfig { lambda: grid[i], ..*base })?.fit;
    Ok((fit, curve))
}
