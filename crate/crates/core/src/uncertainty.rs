//! Error bands from posterior spread and percentile-bootstrap intervals for
//! posterior medians.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gibbs::{self, median, BglssConfig, PosteriorEnsemble, MIN_DRAWS};
use crate::library::{Axis, GroupedLinearSystem, Term};
use crate::seeds;

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 200;

/// Median and one posterior standard deviation per step, physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBand {
    pub term: Term,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBands {
    pub axis: Axis,
    pub steps: Vec<f64>,
    pub bands: Vec<ErrorBand>,
    /// Display hint only; `half_width` is never scaled by it.
    pub magnification: Option<f64>,
}

impl ErrorBands {
    pub fn with_magnification(mut self, factor: f64) -> Self {
        self.magnification = Some(factor);
        self
    }

    pub fn band(&self, term: &Term) -> Option<&ErrorBand> {
        self.bands.iter().find(|b| &b.term == term)
    }
}

pub fn error_bands(ens: &PosteriorEnsemble) -> Result<ErrorBands> {
    let centers = gibbs::posterior_median(ens)?;
    let var = ens.layout.physical_variance(&gibbs::posterior_variance(ens)?);
    let bands = centers
        .terms
        .iter()
        .zip(centers.values)
        .zip(var)
        .map(|((term, center), v)| ErrorBand { term: term.clone(), center, half_width: v.iter().map(|s| s.sqrt()).collect() })
        .collect();
    Ok(ErrorBands { axis: ens.layout.axis, steps: ens.layout.steps.clone(), bands, magnification: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub estimate: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

impl BootstrapCI {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Same value as [`median`] without a full sort.
fn select_median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let (_, &mut hi, _) = v.select_nth_unstable_by(n / 2, |a, b| a.total_cmp(b));
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Bootstrap distribution of the median, sorted ascending.
fn bootstrap_medians(draws: &[f64], n_resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed, seeds::stage::BOOTSTRAP);
    let n = draws.len();
    let mut buf = vec![0.0; n];
    let mut meds: Vec<f64> = (0..n_resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = draws[rng.random_range(0..n)];
            }
            select_median(&mut buf)
        })
        .collect();
    meds.sort_by(|a, b| a.total_cmp(b));
    meds
}

/// Percentile bootstrap interval for the median of `draws`. The bounds are
/// widened to include the point estimate when the percentiles miss it.
pub fn bootstrap_median_ci(draws: &[f64], level: f64, n_resamples: usize, seed: u64) -> Result<BootstrapCI> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::EmptyEnsemble(draws.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level must lie in (0, 1), got {level}"));
    }
    if n_resamples < MIN_RESAMPLES {
        return invalid(format!("need at least {MIN_RESAMPLES} resamples, got {n_resamples}"));
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return invalid("draws contain non-finite values");
    }
    let estimate = median(&mut draws.to_vec());
    let meds = bootstrap_medians(draws, n_resamples, seed);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCI {
        estimate,
        level,
        lower: quantile(&meds, alpha).min(estimate),
        upper: quantile(&meds, 1.0 - alpha).max(estimate),
        n_resamples,
        seed,
    })
}

/// Seed for coefficient `(g, i)` under root `seed`.
pub fn coefficient_seed(seed: u64, g: usize, i: usize) -> u64 {
    seeds::derive(seeds::derive(seed, g as u64), i as u64)
}

/// Physical-unit bootstrap intervals for every coefficient, `[g][i]`.
pub fn ensemble_median_cis(ens: &PosteriorEnsemble, level: f64, n_resamples: usize, seed: u64) -> Result<Vec<Vec<BootstrapCI>>> {
    (0..ens.n_groups())
        .into_par_iter()
        .map(|g| {
            (0..ens.n_steps())
                .map(|i| {
                    let s = ens.layout.scales[i][g];
                    let draws: Vec<f64> = ens.coefficient_draws(g, i).iter().map(|b| b / s).collect();
                    bootstrap_median_ci(&draws, level, n_resamples, coefficient_seed(seed, g, i))
                })
                .collect()
        })
        .collect()
}

/// Medians of `k` independent chains on the same system, pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiChainSummary {
    pub terms: Vec<Term>,
    pub steps: Vec<f64>,
    pub chain_seeds: Vec<u64>,
    /// Physical-unit medians `[chain][g][i]`.
    pub medians: Vec<Vec<Vec<f64>>>,
    /// Median over chains, `[g][i]`.
    pub pooled: Vec<Vec<f64>>,
    /// Standard deviation over chains, `[g][i]`; zero for a single chain.
    pub spread: Vec<Vec<f64>>,
}

pub fn multi_chain_medians(system: &GroupedLinearSystem, config: &BglssConfig, k: usize) -> Result<MultiChainSummary> {
    if k == 0 {
        return invalid("multi-chain mode needs at least one chain");
    }
    let chain_seeds: Vec<u64> = (0..k).map(|c| seeds::derive(seeds::derive(config.seed, seeds::stage::CHAINS), c as u64)).collect();
    let medians: Vec<Vec<Vec<f64>>> = chain_seeds
        .par_iter()
        .map(|&s| gibbs::sample_posterior(system, &config.with_seed(s)).and_then(|e| gibbs::posterior_median(&e)).map(|t| t.values))
        .collect::<Result<_>>()?;
    let (g_n, m) = (system.n_groups(), system.n_steps());
    let mut pooled = vec![vec![0.0; m]; g_n];
    let mut spread = vec![vec![0.0; m]; g_n];
    for g in 0..g_n {
        for i in 0..m {
            let mut v: Vec<f64> = medians.iter().map(|c| c[g][i]).collect();
            spread[g][i] = if k > 1 { gibbs::sample_variance(&v).sqrt() } else { 0.0 };
            pooled[g][i] = median(&mut v);
        }
    }
    Ok(MultiChainSummary { terms: system.terms().to_vec(), steps: system.steps().to_vec(), chain_seeds, medians, pooled, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_draws_give_zero_width() {
        let ci = bootstrap_median_ci(&[0.25; 40], 0.95, 500, 3).unwrap();
        assert_eq!((ci.lower, ci.estimate, ci.upper), (0.25, 0.25, 0.25));
    }

    #[test]
    fn select_median_agrees_with_sort() {
        for n in [30, 31, 64] {
            let v: Vec<f64> = (0..n).map(|k| ((k * 37) % 101) as f64 * 0.5).collect();
            assert_eq!(select_median(&mut v.clone()), median(&mut v.clone()));
        }
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.0);
        assert!((quantile(&s, 0.1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(matches!(bootstrap_median_ci(&[1.0; 10], 0.95, 500, 1), Err(Error::EmptyEnsemble(10))));
        assert!(bootstrap_median_ci(&[1.0; 40], 0.95, 50, 1).is_err());
        assert!(bootstrap_median_ci(&[1.0; 40], 1.0, 500, 1).is_err());
    }
}
