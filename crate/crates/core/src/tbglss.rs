//! Threshold BGL-SS: sample, take medians and variances, drop groups that
//! fail a scale or uncertainty criterion, repeat on the survivors until the
//! sparsity pattern stops changing.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gibbs::{self, BglssConfig, GroupLayout, PosteriorEnsemble};
use crate::library::{CoefficientTrajectories, GroupedLinearSystem, Term};
use crate::seeds;
use crate::selection;

/// Scale and uncertainty thresholds. A group is removed when its RMS is
/// below `t_rms` or its group error bar is above `t_ge`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub t_rms: Option<f64>,
    pub t_ge: Option<f64>,
}

impl ThresholdSpec {
    pub fn new(t_rms: Option<f64>, t_ge: Option<f64>) -> Result<Self> {
        let s = Self { t_rms, t_ge };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_rms.is_none() && self.t_ge.is_none() {
            return invalid("at least one threshold is required");
        }
        for t in [self.t_rms, self.t_ge].into_iter().flatten() {
            if !(t >= 0.0 && t.is_finite()) {
                return invalid(format!("thresholds must be nonnegative, got {t}"));
            }
        }
        Ok(())
    }
}

/// `‖β_g‖₂ / √m_g`.
pub fn rms_criterion(beta_g: &[f64]) -> Result<f64> {
    if beta_g.is_empty() {
        return invalid("empty group");
    }
    Ok(norm2(beta_g).sqrt() / (beta_g.len() as f64).sqrt())
}

/// `Σ_i s²_{g,i} / ‖β_g‖₂²`; `None` for a zero-norm group (already excluded).
pub fn group_error_bar(beta_g: &[f64], s2_g: &[f64]) -> Result<Option<f64>> {
    if beta_g.len() != s2_g.len() {
        return Err(Error::Shape(format!("{} coefficients but {} variances", beta_g.len(), s2_g.len())));
    }
    let n = norm2(beta_g);
    if n == 0.0 {
        return Ok(None);
    }
    Ok(Some(s2_g.iter().sum::<f64>() / n))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Scale on which the criteria are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriteriaScale {
    /// Coefficients of unit-norm columns.
    Normalized,
    /// Coefficients of the original columns.
    Physical,
}

/// Loop settings beyond the sampler config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TbglssOptions {
    /// Chain `(iterations, burn-in)` for updates before the pattern settles.
    pub intermediate_chain: (usize, usize),
    pub criteria_scale: CriteriaScale,
    /// Multiplies every chain length (e.g. 2 for noisy data).
    pub chain_multiplier: usize,
    pub epsilon: f64,
}

impl Default for TbglssOptions {
    fn default() -> Self {
        Self { intermediate_chain: (200, 50), criteria_scale: CriteriaScale::Normalized, chain_multiplier: 1, epsilon: 1e-6 }
    }
}

impl TbglssOptions {
    /// Doubles the chains at noise levels of 2% and above.
    pub fn for_noise(level: f64) -> Self {
        Self { chain_multiplier: if level >= 0.02 { 2 } else { 1 }, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    ZeroMedian,
    BelowRms,
    AboveGroupErrorBar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCriteria {
    pub term: Term,
    pub rms: f64,
    pub group_error_bar: Option<f64>,
    pub spike_frequency: f64,
    pub removed: Option<RemovalReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub lambda: f64,
    pub pi0: f64,
    pub em_converged: Option<bool>,
    pub groups: Vec<GroupCriteria>,
}

impl UpdateRecord {
    pub fn n_removed(&self) -> usize {
        self.groups.iter().filter(|g| g.removed.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config: BglssConfig,
    pub options: TbglssOptions,
    pub dataset: Option<String>,
}

/// Output of a threshold BGL-SS run. Trajectories and variances cover the
/// full input library; excluded groups carry zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub method: String,
    pub trajectories: CoefficientTrajectories,
    /// Physical-scale posterior variances `[g][i]`.
    pub variance: Vec<Vec<f64>>,
    /// Normalized-scale posterior variances `[g][i]`.
    pub variance_normalized: Vec<Vec<f64>>,
    pub updates: Vec<UpdateRecord>,
    pub n_updates: usize,
    pub thresholds: ThresholdSpec,
    pub lambda: f64,
    pub pi0: f64,
    pub selected: Vec<String>,
    pub equation: String,
    pub loss: f64,
    pub total_error_bar: f64,
    pub empty_model: bool,
    /// Some EM run stopped at its round limit.
    pub em_warning: bool,
    pub error_bar_direction: String,
    pub provenance: Provenance,
}

/// Report plus the final ensemble and the system it was drawn on.
#[derive(Debug, Clone)]
pub struct TbglssOutcome {
    pub report: DiscoveryReport,
    pub ensemble: Option<PosteriorEnsemble>,
    pub system: Option<GroupedLinearSystem>,
    /// Indices of the final groups in the input system.
    pub kept: Vec<usize>,
}

pub fn run_tbglss(system: &GroupedLinearSystem, thresholds: ThresholdSpec, config: BglssConfig) -> Result<DiscoveryReport> {
    Ok(run_tbglss_with(system, thresholds, config, &TbglssOptions::default())?.report)
}

struct Evaluation {
    record: UpdateRecord,
    ensemble: PosteriorEnsemble,
    median: Vec<Vec<f64>>,
    s2: Vec<Vec<f64>>,
}

fn evaluate(
    sub: &GroupedLinearSystem,
    cfg: &BglssConfig,
    thresholds: &ThresholdSpec,
    scale: CriteriaScale,
) -> Result<Evaluation> {
    let ensemble = gibbs::sample_posterior(sub, cfg)?;
    let median = gibbs::median_normalized(&ensemble)?;
    let s2 = gibbs::posterior_variance(&ensemble)?;
    let (cm, cs) = criteria_inputs(&ensemble.layout, &median, &s2, scale);
    let mut groups = Vec::with_capacity(sub.n_groups());
    for g in 0..sub.n_groups() {
        let rms = rms_criterion(&cm[g])?;
        let ge = group_error_bar(&cm[g], &cs[g])?;
        let removed = if ge.is_none() {
            Some(RemovalReason::ZeroMedian)
        } else if thresholds.t_rms.is_some_and(|t| rms < t) {
            Some(RemovalReason::BelowRms)
        } else if matches!((thresholds.t_ge, ge), (Some(t), Some(v)) if v > t) {
            Some(RemovalReason::AboveGroupErrorBar)
        } else {
            None
        };
        groups.push(GroupCriteria {
            term: sub.terms()[g].clone(),
            rms,
            group_error_bar: ge,
            spike_frequency: ensemble.spike_frequency(g),
            removed,
        });
    }
    let record = UpdateRecord {
        n_iterations: cfg.n_iterations,
        n_burnin: cfg.n_burnin,
        lambda: ensemble.lambda,
        pi0: match cfg.pi0 {
            gibbs::Pi0Spec::Fixed(p) => p,
            gibbs::Pi0Spec::Estimate => ensemble.pi0().iter().sum::<f64>() / ensemble.n_draws() as f64,
        },
        em_converged: ensemble.hyper.as_ref().map(|h| h.converged),
        groups,
    };
    Ok(Evaluation { record, ensemble, median, s2 })
}

fn criteria_inputs(
    layout: &GroupLayout,
    median: &[Vec<f64>],
    s2: &[Vec<f64>],
    scale: CriteriaScale,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    match scale {
        CriteriaScale::Normalized => (median.to_vec(), s2.to_vec()),
        CriteriaScale::Physical => (layout.trajectories(median).values, layout.physical_variance(s2)),
    }
}

/// Full loop. The final update always uses the chain length of `config`.
pub fn run_tbglss_with(
    system: &GroupedLinearSystem,
    thresholds: ThresholdSpec,
    config: BglssConfig,
    options: &TbglssOptions,
) -> Result<TbglssOutcome> {
    thresholds.validate()?;
    config.validate()?;
    if !system.is_normalized() {
        return invalid("threshold BGL-SS expects a column-normalized system");
    }
    let k = options.chain_multiplier.max(1);
    let long = config.with_chain(config.n_iterations * k, config.n_burnin * k);
    let (si, sb) = options.intermediate_chain;
    let short = config.with_chain(si * k, sb * k);
    let short_differs = short.n_iterations != long.n_iterations || short.n_burnin != long.n_burnin;
    short.validate()?;

    let mut active: Vec<usize> = (0..system.n_groups()).collect();
    let mut updates: Vec<UpdateRecord> = Vec::new();
    let mut long_mode = !short_differs;
    let mut last: Option<(Evaluation, GroupedLinearSystem)> = None;
    let mut em_warning = false;

    while !active.is_empty() {
        let sub = system.select_groups(&active)?;
        let base = if long_mode { long } else { short };
        let cfg = base.with_seed(seeds::derive(config.seed, updates.len() as u64));
        let ev = evaluate(&sub, &cfg, &thresholds, options.criteria_scale)?;
        em_warning |= ev.record.em_converged == Some(false);
        let removed: Vec<usize> =
            ev.record.groups.iter().enumerate().filter(|(_, g)| g.removed.is_some()).map(|(j, _)| active[j]).collect();
        updates.push(ev.record.clone());
        if removed.is_empty() {
            if long_mode {
                last = Some((ev, sub));
                break;
            }
            // Pattern settled on short chains: redo this update with the long chain.
            updates.pop();
            long_mode = true;
            continue;
        }
        active.retain(|g| !removed.contains(g));
        last = Some((ev, sub));
    }

    let terms = system.terms().to_vec();
    let (g_all, m) = (system.n_groups(), system.n_steps());
    let mut report = DiscoveryReport {
        method: "tbglss".into(),
        trajectories: CoefficientTrajectories {
            terms: terms.clone(),
            axis: system.axis(),
            steps: system.steps().to_vec(),
            values: vec![vec![0.0; m]; g_all],
            active: vec![false; g_all],
        },
        variance: vec![vec![0.0; m]; g_all],
        variance_normalized: vec![vec![0.0; m]; g_all],
        n_updates: updates.len(),
        updates,
        thresholds,
        lambda: f64::NAN,
        pi0: f64::NAN,
        selected: vec![],
        equation: String::new(),
        loss: f64::NAN,
        total_error_bar: 0.0,
        empty_model: active.is_empty(),
        em_warning,
        error_bar_direction: "remove when group error bar > t_ge; remove when rms < t_rms".into(),
        provenance: Provenance { seed: config.seed, config, options: *options, dataset: None },
    };
    if let Some(rec) = report.updates.last() {
        report.lambda = rec.lambda;
        report.pi0 = rec.pi0;
    }
    if active.is_empty() {
        report.equation = report.trajectories.render();
        let zero = vec![vec![0.0; m]; 0];
        let empty = system.select_groups(&[])?;
        report.loss = selection::aic_loss(&empty, &zero, 0, options.epsilon)?;
        return Ok(TbglssOutcome { report, ensemble: None, system: None, kept: vec![] });
    }
    let (ev, sub) = last.expect("at least one update ran");
    let phys = ev.ensemble.layout.trajectories(&ev.median);
    let phys_s2 = ev.ensemble.layout.physical_variance(&ev.s2);
    for (j, &g) in active.iter().enumerate() {
        report.trajectories.values[g] = phys.values[j].clone();
        report.trajectories.active[g] = true;
        report.variance[g] = phys_s2[j].clone();
        report.variance_normalized[g] = ev.s2[j].clone();
    }
    report.selected = report.trajectories.support().iter().map(|t| t.to_string()).collect();
    report.equation = report.trajectories.render();
    report.loss = selection::aic_loss(&sub, &ev.median, active.len() * m, options.epsilon)?;
    let (cm, cs) = criteria_inputs(&ev.ensemble.layout, &ev.median, &ev.s2, options.criteria_scale);
    report.total_error_bar = selection::total_error_bar_raw(&cm, &cs)?;
    Ok(TbglssOutcome { report, ensemble: Some(ev.ensemble), system: Some(sub), kept: active })
}

impl DiscoveryReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with one row per step: coordinate, then value and standard deviation per term.
    pub fn write_trajectory_csv(&self, path: &std::path::Path) -> Result<()> {
        write_trajectory_csv(&self.trajectories, Some(&self.variance), path)
    }
}

/// Writes `step, <term>, <term>_sd, ...`. Standard deviations are omitted without variances.
pub fn write_trajectory_csv(
    tr: &CoefficientTrajectories,
    variance: Option<&[Vec<f64>]>,
    path: &std::path::Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let axis = match tr.axis {
        crate::library::Axis::Time => "t",
        crate::library::Axis::Space => "x",
    };
    let mut header = vec![axis.to_string()];
    for t in &tr.terms {
        header.push(t.to_string());
        if variance.is_some() {
            header.push(format!("{t}_sd"));
        }
    }
    w.write_record(&header)?;
    for (i, s) in tr.steps.iter().enumerate() {
        let mut rec = vec![format!("{s:e}")];
        for g in 0..tr.terms.len() {
            rec.push(format!("{:e}", tr.values[g][i]));
            if let Some(v) = variance {
                rec.push(format!("{:e}", v[g][i].sqrt()));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
