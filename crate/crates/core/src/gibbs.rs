//! Block Gibbs sampler for the Bayesian group lasso with spike-and-slab
//! priors, plus Monte Carlo EM for the lasso parameter.
//!
//! Model, for groups `g` of size `m_g`:
//!
//! ```text
//! y | β, σ²        ~ N(Xβ, σ² I)
//! β_g | σ², τ²_g   ~ (1 − π0) N(0, σ² τ²_g I) + π0 δ0
//! τ²_g             ~ Gamma((m_g + 1)/2, rate λ²/2)
//! σ²               ~ InvGamma(α, γ)
//! π0               ~ Beta(1, 1)        (when estimated)
//! ```
//!
//! Group `g` holds column `g` of every per-step block, so `X_gᵀX_g` is
//! diagonal and the slab conditional factorizes over steps. The sampler
//! only touches per-step Gram matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::library::{Axis, CoefficientTrajectories, GroupedLinearSystem, Term};
use crate::seeds;

/// Minimum retained draws for medians and variances.
pub const MIN_DRAWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed(f64),
    EstimateMcEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pi0Spec {
    Fixed(f64),
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseGammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for InverseGammaPrior {
    fn default() -> Self {
        Self { shape: 1e-2, rate: 1e-2 }
    }
}

/// Monte Carlo EM settings for λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub initial_lambda: f64,
    pub max_rounds: usize,
    pub rel_tol: f64,
    pub n_iterations: usize,
    pub n_burnin: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { initial_lambda: 1.0, max_rounds: 20, rel_tol: 1e-3, n_iterations: 200, n_burnin: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BglssConfig {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub lambda: LambdaSpec,
    pub pi0: Pi0Spec,
    pub sigma2_prior: InverseGammaPrior,
    pub seed: u64,
    #[serde(default)]
    pub em: EmConfig,
    /// Holds σ² fixed instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sigma2: Option<f64>,
    /// Holds every τ²_g fixed instead of sampling it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_tau2: Option<f64>,
}

impl Default for BglssConfig {
    fn default() -> Self {
        Self {
            n_iterations: 1000,
            n_burnin: 200,
            lambda: LambdaSpec::EstimateMcEm,
            pi0: Pi0Spec::Estimate,
            sigma2_prior: InverseGammaPrior::default(),
            seed: 0,
            em: EmConfig::default(),
            fixed_sigma2: None,
            fixed_tau2: None,
        }
    }
}

impl BglssConfig {
    pub fn with_chain(mut self, n_iterations: usize, n_burnin: usize) -> Self {
        self.n_iterations = n_iterations;
        self.n_burnin = n_burnin;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iterations {
            return invalid(format!("burn-in {} must be below iterations {}", self.n_burnin, self.n_iterations));
        }
        if let LambdaSpec::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("lambda must be positive, got {l}"));
            }
        }
        if let Pi0Spec::Fixed(p) = self.pi0 {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("pi0 must lie in [0, 1], got {p}"));
            }
        }
        let InverseGammaPrior { shape, rate } = self.sigma2_prior;
        if !(shape > 0.0 && rate > 0.0) {
            return invalid("sigma^2 prior shape and rate must be positive");
        }
        if let Some(s) = self.fixed_sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return invalid("fixed sigma^2 must be positive");
            }
        }
        if let Some(t) = self.fixed_tau2 {
            if !(t > 0.0 && t.is_finite()) {
                return invalid("fixed tau^2 must be positive");
            }
        }
        let em = &self.em;
        if self.lambda == LambdaSpec::EstimateMcEm
            && (!(em.initial_lambda > 0.0) || em.max_rounds == 0 || !(em.rel_tol > 0.0) || em.n_burnin >= em.n_iterations)
        {
            return invalid("invalid Monte Carlo EM settings");
        }
        Ok(())
    }
}

/// Term names, step grid and column scales needed to map draws back to physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLayout {
    pub terms: Vec<Term>,
    pub axis: Axis,
    pub steps: Vec<f64>,
    /// `scales[i][g]`.
    pub scales: Vec<Vec<f64>>,
}

impl GroupLayout {
    pub fn of(system: &GroupedLinearSystem) -> Self {
        Self {
            terms: system.terms().to_vec(),
            axis: system.axis(),
            steps: system.steps().to_vec(),
            scales: system.scales().to_vec(),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.terms.len()
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Physical trajectories from normalized coefficients `beta[g][i]`.
    pub fn trajectories(&self, beta: &[Vec<f64>]) -> CoefficientTrajectories {
        let values: Vec<Vec<f64>> = beta
            .iter()
            .enumerate()
            .map(|(g, b)| b.iter().enumerate().map(|(i, v)| v / self.scales[i][g]).collect())
            .collect();
        let active = values.iter().map(|v| v.iter().any(|&c| c != 0.0)).collect();
        CoefficientTrajectories { terms: self.terms.clone(), axis: self.axis, steps: self.steps.clone(), values, active }
    }

    /// Physical variances from normalized-scale variances.
    pub fn physical_variance(&self, s2: &[Vec<f64>]) -> Vec<Vec<f64>> {
        s2.iter()
            .enumerate()
            .map(|(g, s)| s.iter().enumerate().map(|(i, v)| v / self.scales[i][g].powi(2)).collect())
            .collect()
    }
}

/// Outcome of hyperparameter estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperEstimate {
    pub lambda: f64,
    pub pi0: f64,
    pub rounds: usize,
    pub converged: bool,
    /// λ after each EM round.
    pub lambda_history: Vec<f64>,
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorEnsemble {
    pub layout: GroupLayout,
    /// Per draw, normalized coefficients flattened as `g * m + i`.
    beta: Vec<Vec<f64>>,
    tau2: Vec<Vec<f64>>,
    sigma2: Vec<f64>,
    pi0: Vec<f64>,
    slab: Vec<Vec<bool>>,
    pub n_iterations: usize,
    /// λ used for the retained chain.
    pub lambda: f64,
    pub hyper: Option<HyperEstimate>,
}

impl PosteriorEnsemble {
    /// Builds an ensemble from coefficient draws alone (`draws[d][g][i]`).
    /// A group is in the slab for a draw when any of its coefficients is nonzero.
    pub fn from_beta_draws(layout: GroupLayout, draws: &[Vec<Vec<f64>>]) -> Result<Self> {
        let (gn, m) = (layout.n_groups(), layout.n_steps());
        let mut beta = Vec::with_capacity(draws.len());
        let mut slab = Vec::with_capacity(draws.len());
        for d in draws {
            if d.len() != gn || d.iter().any(|g| g.len() != m) {
                return Err(Error::Shape(format!("draw is not {gn} groups of {m}")));
            }
            beta.push(d.iter().flatten().copied().collect());
            slab.push(d.iter().map(|g| g.iter().any(|&v| v != 0.0)).collect());
        }
        let n = draws.len();
        Ok(Self {
            layout,
            beta,
            tau2: vec![vec![1.0; gn]; n],
            sigma2: vec![1.0; n],
            pi0: vec![f64::NAN; n],
            slab,
            n_iterations: n,
            lambda: f64::NAN,
            hyper: None,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.beta.len()
    }

    pub fn n_groups(&self) -> usize {
        self.layout.n_groups()
    }

    pub fn n_steps(&self) -> usize {
        self.layout.n_steps()
    }

    /// Draw `d` of coefficient `(g, i)`.
    pub fn beta(&self, d: usize, g: usize, i: usize) -> f64 {
        self.beta[d][g * self.n_steps() + i]
    }

    /// All retained draws of coefficient `(g, i)`.
    pub fn coefficient_draws(&self, g: usize, i: usize) -> Vec<f64> {
        let k = g * self.n_steps() + i;
        self.beta.iter().map(|b| b[k]).collect()
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn tau2(&self) -> &[Vec<f64>] {
        &self.tau2
    }

    pub fn pi0(&self) -> &[f64] {
        &self.pi0
    }

    /// `slab()[d][g]` is true when group `g` was drawn from the slab in draw `d`.
    pub fn slab(&self) -> &[Vec<bool>] {
        &self.slab
    }

    /// Fraction of draws with group `g` in the spike.
    pub fn spike_frequency(&self, g: usize) -> f64 {
        self.slab.iter().filter(|s| !s[g]).count() as f64 / self.n_draws() as f64
    }

    fn check_draws(&self) -> Result<()> {
        if self.n_draws() < MIN_DRAWS {
            return Err(Error::EmptyEnsemble(self.n_draws()));
        }
        Ok(())
    }

    /// Writes retained draws as CSV: draw, sigma2, pi0, tau2 per group, then every coefficient.
    pub fn write_trace_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["draw".to_string(), "sigma2".into(), "pi0".into()];
        header.extend(self.layout.terms.iter().map(|t| format!("tau2[{t}]")));
        for t in &self.layout.terms {
            header.extend((0..self.n_steps()).map(|i| format!("{t}@{i}")));
        }
        w.write_record(&header)?;
        for d in 0..self.n_draws() {
            let mut rec = vec![d.to_string(), self.sigma2[d].to_string(), self.pi0[d].to_string()];
            rec.extend(self.tau2[d].iter().map(|v| v.to_string()));
            rec.extend(self.beta[d].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Median with the mid-point convention for even counts. Sorts in place.
pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Unbiased sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Per-coefficient posterior medians on the normalized scale, `[g][i]`.
pub fn median_normalized(ens: &PosteriorEnsemble) -> Result<Vec<Vec<f64>>> {
    ens.check_draws()?;
    Ok((0..ens.n_groups())
        .map(|g| (0..ens.n_steps()).map(|i| median(&mut ens.coefficient_draws(g, i))).collect())
        .collect())
}

/// Posterior median trajectories in physical units; groups whose median is
/// identically zero are marked inactive.
pub fn posterior_median(ens: &PosteriorEnsemble) -> Result<CoefficientTrajectories> {
    Ok(ens.layout.trajectories(&median_normalized(ens)?))
}

/// Unbiased per-coefficient sample variance on the normalized scale, `[g][i]`.
pub fn posterior_variance(ens: &PosteriorEnsemble) -> Result<Vec<Vec<f64>>> {
    ens.check_draws()?;
    Ok((0..ens.n_groups())
        .map(|g| (0..ens.n_steps()).map(|i| sample_variance(&ens.coefficient_draws(g, i))).collect())
        .collect())
}

/// Per-step sufficient statistics.
struct Stats {
    gram: Vec<DMatrix<f64>>,
    xty: Vec<DVector<f64>>,
    yty: f64,
    n_rows: usize,
}

impl Stats {
    fn of(system: &GroupedLinearSystem) -> Self {
        let grams = system.grams();
        let yty = grams.iter().map(|s| s.yty).sum();
        let (gram, xty) = grams.into_iter().map(|s| (s.gram, s.xty)).unzip();
        Self { gram, xty, yty, n_rows: system.n_rows() }
    }

    fn n_groups(&self) -> usize {
        self.gram[0].nrows()
    }

    fn n_steps(&self) -> usize {
        self.gram.len()
    }
}

struct Chain<'a> {
    stats: &'a Stats,
    config: &'a BglssConfig,
    lambda: f64,
    /// `beta[g][i]`.
    beta: Vec<Vec<f64>>,
    /// `q[i] = A_i β_i`.
    q: Vec<DVector<f64>>,
    tau2: Vec<f64>,
    sigma2: f64,
    pi0: f64,
    slab: Vec<bool>,
    // scratch
    z: Vec<f64>,
    var: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(stats: &'a Stats, config: &'a BglssConfig, lambda: f64) -> Self {
        let (gn, m) = (stats.n_groups(), stats.n_steps());
        let pi0 = match config.pi0 {
            Pi0Spec::Fixed(p) => p,
            Pi0Spec::Estimate => 0.5,
        };
        let mut chain = Self {
            stats,
            config,
            lambda,
            beta: vec![vec![0.0; m]; gn],
            q: vec![DVector::zeros(gn); m],
            tau2: vec![config.fixed_tau2.unwrap_or(1.0); gn],
            sigma2: (stats.yty / stats.n_rows as f64).max(f64::MIN_POSITIVE),
            pi0,
            slab: vec![false; gn],
            z: vec![0.0; m],
            var: vec![0.0; m],
        };
        if pi0 < 1.0 {
            chain.warm_start();
        }
        if let Some(s) = config.fixed_sigma2 {
            chain.sigma2 = s;
        }
        chain
    }

    /// Starts from the per-step ridge fit with every group in the slab. On
    /// nearly collinear libraries with small residuals the group updates move
    /// slowly, so a start at zero can take far longer than any burn-in to reach
    /// the bulk of the posterior. Leaves the zero start if any step is singular.
    fn warm_start(&mut self) {
        let (gn, m) = (self.stats.n_groups(), self.stats.n_steps());
        let mut beta = vec![vec![0.0; m]; gn];
        let mut q = Vec::with_capacity(m);
        for i in 0..m {
            let a = &self.stats.gram[i];
            let ridge = 1e-8 * a.diagonal().mean().max(f64::MIN_POSITIVE);
            let reg = a + DMatrix::identity(gn, gn) * ridge;
            let Some(chol) = reg.cholesky() else { return };
            let b = chol.solve(&self.stats.xty[i]);
            if b.iter().any(|v| !v.is_finite()) {
                return;
            }
            for g in 0..gn {
                beta[g][i] = b[g];
            }
            q.push(a * &b);
        }
        let mut rss = self.stats.yty;
        for i in 0..m {
            for g in 0..gn {
                rss += beta[g][i] * (q[i][g] - 2.0 * self.stats.xty[i][g]);
            }
        }
        self.sigma2 = (rss.max(0.0) / self.stats.n_rows as f64).max(1e-12 * self.sigma2).max(f64::MIN_POSITIVE);
        self.beta = beta;
        self.q = q;
        self.slab = vec![true; gn];
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng) -> Result<()> {
        let (gn, m) = (self.stats.n_groups(), self.stats.n_steps());
        for g in 0..gn {
            self.update_group(g, rng)?;
        }
        // τ²
        if let Some(t) = self.config.fixed_tau2 {
            self.tau2.iter_mut().for_each(|v| *v = t);
        } else {
            let l2 = self.lambda * self.lambda;
            for g in 0..gn {
                self.tau2[g] = if self.slab[g] {
                    let norm = self.beta[g].iter().map(|b| b * b).sum::<f64>().sqrt();
                    let mean = (self.lambda * self.sigma2.sqrt() / norm).min(1e300);
                    let inv: f64 = InverseGaussian::new(mean, l2)
                        .map_err(|_| Error::NotPositiveDefinite { group: g })?
                        .sample(rng);
                    let inv = if inv.is_finite() && inv > 0.0 { inv } else { mean };
                    (1.0 / inv).clamp(1e-300, 1e300)
                } else {
                    let shape = (m as f64 + 1.0) / 2.0;
                    let draw: f64 = Gamma::new(shape, 2.0 / l2)
                        .map_err(|_| Error::NotPositiveDefinite { group: g })?
                        .sample(rng);
                    draw.clamp(1e-300, 1e300)
                };
            }
        }
        // σ²
        if let Some(s) = self.config.fixed_sigma2 {
            self.sigma2 = s;
        } else {
            let mut rss = self.stats.yty;
            for i in 0..m {
                for g in 0..gn {
                    let b = self.beta[g][i];
                    if b != 0.0 {
                        rss += b * (self.q[i][g] - 2.0 * self.stats.xty[i][g]);
                    }
                }
            }
            let rss = rss.max(0.0);
            let mut shape = self.config.sigma2_prior.shape + self.stats.n_rows as f64 / 2.0;
            let mut rate = self.config.sigma2_prior.rate + rss / 2.0;
            for g in 0..gn {
                if self.slab[g] {
                    shape += m as f64 / 2.0;
                    rate += self.beta[g].iter().map(|b| b * b).sum::<f64>() / (2.0 * self.tau2[g]);
                }
            }
            let gdraw: f64 = Gamma::new(shape, 1.0).map_err(|_| Error::SigmaDiverged(rate))?.sample(rng);
            let s2 = rate / gdraw;
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(Error::SigmaDiverged(s2));
            }
            self.sigma2 = s2;
        }
        // π0
        if self.config.pi0 == Pi0Spec::Estimate {
            let n_slab = self.slab.iter().filter(|&&s| s).count() as f64;
            let n_spike = gn as f64 - n_slab;
            self.pi0 = Beta::new(1.0 + n_spike, 1.0 + n_slab).expect("positive beta parameters").sample(rng);
        }
        Ok(())
    }

    fn update_group(&mut self, g: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let m = self.stats.n_steps();
        let tau2 = self.tau2[g];
        let mut log_ratio = 0.0;
        for i in 0..m {
            let a = &self.stats.gram[i];
            let d = a[(g, g)];
            let z = self.stats.xty[i][g] - self.q[i][g] + d * self.beta[g][i];
            let prec = d + 1.0 / tau2;
            if !(prec > 0.0 && prec.is_finite()) {
                return Err(Error::NotPositiveDefinite { group: g });
            }
            let v = 1.0 / prec;
            self.z[i] = z;
            self.var[i] = v;
            log_ratio += 0.5 * (v / tau2).ln() + z * z * v / (2.0 * self.sigma2);
        }
        let spike_prob = if self.pi0 >= 1.0 {
            1.0
        } else if self.pi0 <= 0.0 {
            0.0
        } else {
            let log_odds_slab = (1.0 - self.pi0).ln() - self.pi0.ln() + log_ratio;
            1.0 / (1.0 + log_odds_slab.exp())
        };
        let u: f64 = rng.random();
        let to_slab = u >= spike_prob;
        let sd = self.sigma2.sqrt();
        for i in 0..m {
            let new = if to_slab {
                let e: f64 = StandardNormal.sample(rng);
                self.var[i] * self.z[i] + sd * self.var[i].sqrt() * e
            } else {
                0.0
            };
            let delta = new - self.beta[g][i];
            if delta != 0.0 {
                let col = self.stats.gram[i].column(g);
                self.q[i].axpy(delta, &col, 1.0);
                self.beta[g][i] = new;
            }
        }
        self.slab[g] = to_slab;
        Ok(())
    }
}

fn resolve_pi0(config: &BglssConfig, draws: &[f64]) -> f64 {
    match config.pi0 {
        Pi0Spec::Fixed(p) => p,
        Pi0Spec::Estimate => draws.iter().sum::<f64>() / draws.len() as f64,
    }
}

/// Estimates λ by Monte Carlo EM and π0 by its posterior mean. Fixed values
/// are returned untouched.
pub fn estimate_hyperparams(system: &GroupedLinearSystem, config: &BglssConfig) -> Result<HyperEstimate> {
    config.validate()?;
    let stats = Stats::of(system);
    estimate_with_stats(&stats, config)
}

fn estimate_with_stats(stats: &Stats, config: &BglssConfig) -> Result<HyperEstimate> {
    let em = config.em;
    let mut rng = seeds::rng(config.seed, seeds::stage::HYPERPARAMS);
    let (lambda0, estimate_lambda) = match config.lambda {
        LambdaSpec::Fixed(l) => (l, false),
        LambdaSpec::EstimateMcEm => (em.initial_lambda, true),
    };
    if !estimate_lambda && matches!(config.pi0, Pi0Spec::Fixed(_)) {
        return Ok(HyperEstimate {
            lambda: lambda0,
            pi0: resolve_pi0(config, &[]),
            rounds: 0,
            converged: true,
            lambda_history: vec![],
        });
    }
    let gn = stats.n_groups();
    let m = stats.n_steps() as f64;
    let mut chain = Chain::new(stats, config, lambda0);
    let mut history = Vec::new();
    let mut converged = false;
    let mut pi0_draws = Vec::new();
    let rounds = if estimate_lambda { em.max_rounds } else { 1 };
    for _ in 0..rounds {
        let mut tau_sum = vec![0.0; gn];
        pi0_draws.clear();
        for it in 0..em.n_iterations {
            chain.sweep(&mut rng)?;
            if it >= em.n_burnin {
                for g in 0..gn {
                    tau_sum[g] += chain.tau2[g];
                }
                pi0_draws.push(chain.pi0);
            }
        }
        if !estimate_lambda {
            converged = true;
            break;
        }
        let kept = (em.n_iterations - em.n_burnin) as f64;
        let expected: f64 = tau_sum.iter().map(|s| s / kept).sum();
        let new = (gn as f64 * (m + 1.0) / expected).sqrt();
        let old = chain.lambda;
        history.push(new);
        chain.lambda = new;
        if ((new - old) / old).abs() < em.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(HyperEstimate {
        lambda: chain.lambda,
        pi0: resolve_pi0(config, &pi0_draws),
        rounds: history.len().max(1),
        converged,
        lambda_history: history,
    })
}

/// Runs the sampler and keeps draws after burn-in. With λ set to
/// [`LambdaSpec::EstimateMcEm`] the EM estimate is computed first and used
/// for the retained chain.
pub fn sample_posterior(system: &GroupedLinearSystem, config: &BglssConfig) -> Result<PosteriorEnsemble> {
    config.validate()?;
    if system.n_groups() == 0 {
        return invalid("system has no groups");
    }
    let stats = Stats::of(system);
    let (lambda, hyper) = match config.lambda {
        LambdaSpec::Fixed(l) => (l, None),
        LambdaSpec::EstimateMcEm => {
            let h = estimate_with_stats(&stats, config)?;
            (h.lambda, Some(h))
        }
    };
    let mut rng = seeds::rng(config.seed, seeds::stage::SAMPLER);
    let mut chain = Chain::new(&stats, config, lambda);
    let kept = config.n_iterations - config.n_burnin;
    let mut ens = PosteriorEnsemble {
        layout: GroupLayout::of(system),
        beta: Vec::with_capacity(kept),
        tau2: Vec::with_capacity(kept),
        sigma2: Vec::with_capacity(kept),
        pi0: Vec::with_capacity(kept),
        slab: Vec::with_capacity(kept),
        n_iterations: config.n_iterations,
        lambda,
        hyper,
    };
    for it in 0..config.n_iterations {
        chain.sweep(&mut rng)?;
        if it >= config.n_burnin {
            ens.beta.push(chain.beta.iter().flatten().copied().collect());
            ens.tau2.push(chain.tau2.clone());
            ens.sigma2.push(chain.sigma2);
            ens.pi0.push(chain.pi0);
            ens.slab.push(chain.slab.clone());
        }
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Single group, `m` steps, each step one column with squared norm `n`.
    fn orthogonal_single_group(n: usize, beta: &[f64], noise: f64, seed: u64) -> GroupedLinearSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = beta.len();
        let mut blocks = Vec::new();
        let mut targets = Vec::new();
        for &b in beta {
            let raw = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let col: DVector<f64> = raw.normalize() * (n as f64).sqrt();
            let e = DVector::from_fn(n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
            targets.push(&col * b + e);
            blocks.push(DMatrix::from_column_slice(n, 1, col.as_slice()));
        }
        GroupedLinearSystem::from_blocks(vec![Term::power_derivative(1, 0)], Axis::Time, (0..m).map(|i| i as f64).collect(), blocks, targets)
            .unwrap()
    }

    fn layout(g: usize, m: usize) -> GroupLayout {
        GroupLayout {
            terms: (0..g).map(|p| Term::power_derivative(p as u32, 0)).collect(),
            axis: Axis::Time,
            steps: (0..m).map(|i| i as f64).collect(),
            scales: vec![vec![1.0; g]; m],
        }
    }

    #[test]
    fn median_and_variance_conventions() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [-1.0, 1.0, -1.0, 1.0]), 0.0);
        let k = 20;
        let v: Vec<f64> = (0..2 * k).map(|j| if j % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let want = 2.0 * k as f64 / (2.0 * k as f64 - 1.0);
        assert!((sample_variance(&v) - want).abs() < 1e-12);
    }

    #[test]
    fn majority_spike_gives_zero_median_and_mask() {
        let draws: Vec<Vec<Vec<f64>>> =
            (0..40).map(|d| vec![vec![1.0, 2.0], if d < 25 { vec![0.0, 0.0] } else { vec![5.0, 6.0] }]).collect();
        let ens = PosteriorEnsemble::from_beta_draws(layout(2, 2), &draws).unwrap();
        let med = posterior_median(&ens).unwrap();
        assert_eq!(med.active, vec![true, false]);
        assert_eq!(med.values[1], vec![0.0, 0.0]);
        let s2 = posterior_variance(&ens).unwrap();
        assert_eq!(s2[0], vec![0.0, 0.0]);
    }

    #[test]
    fn too_few_draws_is_an_error() {
        let draws = vec![vec![vec![1.0]]; 10];
        let ens = PosteriorEnsemble::from_beta_draws(layout(1, 1), &draws).unwrap();
        assert!(matches!(posterior_median(&ens), Err(Error::EmptyEnsemble(10))));
        let ens = PosteriorEnsemble::from_beta_draws(layout(1, 1), &[]).unwrap();
        assert!(matches!(posterior_variance(&ens), Err(Error::EmptyEnsemble(0))));
    }

    #[test]
    fn pi0_one_forces_null_model() {
        let sys = orthogonal_single_group(50, &[1.0, -2.0, 0.5], 0.1, 1);
        let cfg = BglssConfig { lambda: LambdaSpec::Fixed(1.0), pi0: Pi0Spec::Fixed(1.0), ..Default::default() }.with_chain(200, 50);
        let ens = sample_posterior(&sys, &cfg).unwrap();
        assert_eq!(ens.n_draws(), 150);
        assert!((0..ens.n_draws()).all(|d| (0..3).all(|i| ens.beta(d, 0, i) == 0.0)));
        assert!(ens.sigma2().iter().all(|&s| s > 0.0));
        assert!(ens.tau2().iter().flatten().all(|&t| t > 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let sys = orthogonal_single_group(30, &[1.0, 0.0, 2.0, 1.0], 0.3, 3);
        let cfg = BglssConfig::default().with_chain(120, 20).with_seed(11);
        let a = sample_posterior(&sys, &cfg).unwrap();
        let b = sample_posterior(&sys, &cfg).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.sigma2, b.sigma2);
        let c = sample_posterior(&sys, &cfg.with_seed(12)).unwrap();
        assert_ne!(a.beta, c.beta);
    }

    #[test]
    fn fixed_hyperparams_returned_untouched() {
        let sys = orthogonal_single_group(20, &[1.0, 1.0], 0.1, 0);
        let cfg = BglssConfig { lambda: LambdaSpec::Fixed(0.7), pi0: Pi0Spec::Fixed(0.3), ..Default::default() };
        let h = estimate_hyperparams(&sys, &cfg).unwrap();
        assert_eq!((h.lambda, h.pi0, h.rounds), (0.7, 0.3, 0));
    }

    #[test]
    fn config_validation() {
        let ok = BglssConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ok.with_chain(10, 10).validate().is_err());
        assert!(BglssConfig { pi0: Pi0Spec::Fixed(1.5), ..ok }.validate().is_err());
        assert!(BglssConfig { sigma2_prior: InverseGammaPrior { shape: 0.0, rate: 1.0 }, ..ok }.validate().is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<BglssConfig>(&json).unwrap(), ok);
    }
}
