//! End-to-end runs driven by one serializable [`RunConfig`]: data
//! (simulated or loaded), noise, filters, derivatives, library, method.
//!
//! Seeds: the root `seed` feeds the sampler directly; noise uses
//! `derive(seed, NOISE)` and bootstrap resampling `derive(seed, BOOTSTRAP)`
//! (see [`crate::seeds`]).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineFit, GroupLassoConfig, SgtrConfig};
use crate::differentiation::{DiffConfig, GridAxis};
use crate::error::{invalid, Error, Result};
use crate::field::SpatioTemporalField;
use crate::filters::{self, FilterCurve, FilterFamily, FilterSpec};
use crate::gibbs::BglssConfig;
use crate::io::{self, Dataset, DatasetFormat, DatasetMeta};
use crate::library::{build_system, CoefficientTrajectories, GroupedLinearSystem, LibrarySpec, Term};
use crate::pde_solvers::{self, Family, PdeScenario, TrueCoefficients};
use crate::seeds;
use crate::selection::{self, SelectionCurve, SweepAxis, SweepMethod};
use crate::tbglss::{self, DiscoveryReport, ThresholdSpec, TbglssOptions};
use crate::uncertainty::{self, BootstrapCI, ErrorBands, MultiChainSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Tbglss,
    Sgtr,
    GroupLasso,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tbglss" => Ok(Self::Tbglss),
            "sgtr" => Ok(Self::Sgtr),
            "group_lasso" | "group-lasso" => Ok(Self::GroupLasso),
            _ => invalid(format!("unknown method '{s}' (tbglss, sgtr, group_lasso)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSettings {
    pub level: f64,
    pub n_resamples: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { level: uncertainty::DEFAULT_LEVEL, n_resamples: uncertainty::DEFAULT_RESAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Simulate this preset unless `dataset` is set.
    pub family: Option<Family>,
    pub dataset: Option<PathBuf>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    /// Noise level as a fraction of the field's standard deviation (simulation only).
    pub noise: f64,
    pub seed: u64,
    pub filters: Vec<FilterSpec>,
    /// `None` picks finite differences for clean data and the family's
    /// polynomial-fit recipe otherwise.
    pub diff: Option<DiffConfig>,
    pub library: LibrarySpec,
    pub method: Method,
    /// `None` uses the family preset.
    pub thresholds: Option<ThresholdSpec>,
    pub sampler: BglssConfig,
    /// `None` uses the noise-dependent defaults.
    pub tbglss: Option<TbglssOptions>,
    pub sgtr: SgtrConfig,
    pub group_lasso: GroupLassoConfig,
    /// Pick baseline parameters by loss over the default grid instead of using the fixed values.
    pub select_by_loss: bool,
    pub bootstrap: Option<BootstrapSettings>,
    /// Extra independent final chains (0 disables).
    pub chains: usize,
    pub dataset_format: DatasetFormat,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Some(Family::Burgers),
            dataset: None,
            nx: None,
            nt: None,
            noise: 0.0,
            seed: 1,
            filters: vec![],
            diff: None,
            library: LibrarySpec::default(),
            method: Method::Tbglss,
            thresholds: None,
            sampler: BglssConfig::default(),
            tbglss: None,
            sgtr: SgtrConfig::default(),
            group_lasso: GroupLassoConfig::default(),
            select_by_loss: true,
            bootstrap: None,
            chains: 0,
            dataset_format: DatasetFormat::Csv,
            output_dir: None,
        }
    }
}

/// Thresholds used for each family when none are configured.
pub fn preset_thresholds(family: Family, noise: f64) -> ThresholdSpec {
    match family {
        Family::Burgers => ThresholdSpec { t_rms: Some(if noise >= 0.05 { 0.01 } else { 0.02 }), t_ge: Some(0.1) },
        Family::AdvectionDiffusion => ThresholdSpec { t_rms: Some(if noise >= 0.02 { 0.01 } else { 0.02 }), t_ge: Some(0.08) },
        Family::KuramotoSivashinsky => ThresholdSpec { t_rms: Some(0.1), t_ge: Some(0.05) },
    }
}

/// Derivative settings for noisy or filtered data of each family.
pub fn preset_diff(family: Option<Family>) -> DiffConfig {
    match family {
        Some(Family::Burgers | Family::AdvectionDiffusion) => DiffConfig::wide(),
        _ => DiffConfig::noisy(),
    }
}

impl RunConfig {
    pub fn for_family(family: Family) -> Self {
        Self { family: Some(family), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_none() && self.family.is_none() {
            return invalid("either a family or a dataset path is required");
        }
        if let Some(p) = &self.dataset {
            if !p.exists() {
                return invalid(format!("dataset {} does not exist", p.display()));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid(format!("noise level must be nonnegative, got {}", self.noise));
        }
        for f in &self.filters {
            f.validate()?;
        }
        if let Some(t) = &self.thresholds {
            t.validate()?;
        }
        self.sampler.validate()?;
        self.sgtr.validate()?;
        self.group_lasso.validate()?;
        if let Some(b) = &self.bootstrap {
            if !(b.level > 0.0 && b.level < 1.0) || b.n_resamples < uncertainty::MIN_RESAMPLES {
                return invalid("bootstrap needs a level in (0, 1) and at least 200 resamples");
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<PdeScenario> {
        let family = self.family.ok_or_else(|| Error::InvalidArgument("no family configured".into()))?;
        let s = PdeScenario::preset(family);
        let (nx, nt) = (self.nx.unwrap_or(s.nx), self.nt.unwrap_or(s.nt));
        Ok(s.with_grid(nx, nt))
    }

    pub fn noise_seed(&self) -> u64 {
        seeds::derive(self.seed, seeds::stage::NOISE)
    }

    pub fn bootstrap_seed(&self) -> u64 {
        seeds::derive(self.seed, seeds::stage::BOOTSTRAP)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Simulated dataset (full grid, noise added) and its clean counterpart.
pub fn simulate(cfg: &RunConfig) -> Result<(Dataset, SpatioTemporalField)> {
    cfg.validate()?;
    let sc = cfg.scenario()?;
    let clean = sc.solve()?;
    let noisy = pde_solvers::add_noise(&clean, cfg.noise, cfg.noise_seed())?;
    let meta = DatasetMeta {
        scenario: Some(sc.meta()),
        noise_level: cfg.noise,
        seed: Some(cfg.noise_seed()),
        filters: vec![],
        extra: Some(serde_json::json!({ "run_config": cfg.to_json_value() })),
    };
    Ok((Dataset { field: noisy, meta }, clean))
}

/// Discovery input after windowing, noise and filters.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub field: SpatioTemporalField,
    /// Clean field on the unfiltered grid, when the source is a preset scenario.
    pub clean: Option<SpatioTemporalField>,
    pub scenario: Option<PdeScenario>,
    pub family: Option<Family>,
    pub noise: f64,
    pub filters: Vec<FilterSpec>,
}

/// Loads or simulates the data. The clean reference is computed only when `want_clean`.
pub fn prepare(cfg: &RunConfig, want_clean: bool) -> Result<PreparedData> {
    cfg.validate()?;
    let mut clean = None;
    let (field, scenario, noise, mut filters, family) = match &cfg.dataset {
        Some(path) => {
            let ds = io::read_dataset(path)?;
            let scenario = ds.meta.scenario.as_ref().and_then(|m| PdeScenario::from_meta(m).ok());
            let family = ds.meta.scenario.as_ref().map(|m| m.family);
            let t0 = ds.meta.scenario.as_ref().and_then(|m| m.retained_t_min);
            let field = match t0 {
                Some(t0) => ds.field.time_window(t0)?,
                None => ds.field,
            };
            (field, scenario, ds.meta.noise_level, ds.meta.filters, family)
        }
        None => {
            let (ds, c) = simulate(cfg)?;
            let sc = cfg.scenario()?;
            let field = sc.retained(&ds.field)?;
            if want_clean {
                clean = Some(sc.retained(&c)?);
            }
            (field, Some(sc), cfg.noise, vec![], cfg.family)
        }
    };
    if let (None, Some(sc), true) = (&clean, &scenario, want_clean) {
        clean = Some(sc.retained(&sc.solve()?)?);
    }
    let mut field = field;
    for f in &cfg.filters {
        field = filters::apply_filter(&field, f)?;
        filters.push(*f);
    }
    Ok(PreparedData { field, clean, scenario, family, noise, filters })
}

impl PreparedData {
    pub fn diff(&self, cfg: &RunConfig) -> DiffConfig {
        cfg.diff.unwrap_or_else(|| if self.noise == 0.0 && self.filters.is_empty() { DiffConfig::clean() } else { preset_diff(self.family) })
    }

    pub fn thresholds(&self, cfg: &RunConfig) -> ThresholdSpec {
        cfg.thresholds
            .or_else(|| self.family.map(|f| preset_thresholds(f, self.noise)))
            .unwrap_or(ThresholdSpec { t_rms: Some(0.02), t_ge: Some(0.1) })
    }

    pub fn options(&self, cfg: &RunConfig) -> TbglssOptions {
        cfg.tbglss.unwrap_or_else(|| TbglssOptions::for_noise(self.noise))
    }

    /// Varying axis: the scenario's, or time when unknown.
    pub fn axis(&self) -> crate::library::Axis {
        self.scenario.as_ref().map(|s| s.varying_axis()).unwrap_or(crate::library::Axis::Time)
    }

    /// Column-normalized grouped system.
    pub fn system(&self, cfg: &RunConfig) -> Result<GroupedLinearSystem> {
        build_system(&self.field, self.diff(cfg), &cfg.library, self.axis())?.normalize_columns()
    }

    pub fn truth(&self, system: &GroupedLinearSystem) -> Option<TrueCoefficients> {
        self.scenario.as_ref().and_then(|s| pde_solvers::true_coefficients(s, system.terms(), system.steps()).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermIntervals {
    pub term: Term,
    pub intervals: Vec<BootstrapCI>,
}

/// Everything a discovery run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seeds: SeedSchedule,
    pub method: Method,
    pub status: String,
    pub equation: String,
    pub selected: Vec<String>,
    pub empty_model: bool,
    pub trajectories: CoefficientTrajectories,
    /// Physical-unit standard deviations `[g][i]` (tBGL-SS only).
    pub std_dev: Option<Vec<Vec<f64>>>,
    pub loss: f64,
    pub total_error_bar: Option<f64>,
    pub coefficient_mse: Option<f64>,
    pub data_mse: Option<f64>,
    pub diff: DiffConfig,
    pub filters: Vec<FilterSpec>,
    pub tbglss: Option<DiscoveryReport>,
    pub baseline: Option<BaselineFit>,
    pub baseline_curve: Option<SelectionCurve>,
    pub bands: Option<ErrorBands>,
    pub intervals: Option<Vec<TermIntervals>>,
    pub multi_chain: Option<MultiChainSummary>,
    pub truth: Option<TrueCoefficients>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub root: u64,
    pub noise: u64,
    pub sampler: u64,
    pub bootstrap: u64,
}

impl SeedSchedule {
    pub fn of(cfg: &RunConfig) -> Self {
        Self { root: cfg.seed, noise: cfg.noise_seed(), sampler: cfg.seed, bootstrap: cfg.bootstrap_seed() }
    }
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rendered equation plus status line.
    pub fn summary(&self) -> String {
        let mut s = format!("method: {:?}\n{}\n", self.method, self.equation);
        if self.empty_model {
            s.push_str("status: no terms selected\n");
        }
        if let Some(m) = self.coefficient_mse {
            s.push_str(&format!("coefficient mse: {m:e}\n"));
        }
        s.push_str(&format!("loss: {}\n", self.loss));
        s.push_str(&format!("seeds: {}\n", serde_json::to_string(&self.seeds).unwrap_or_default()));
        s.push_str(&format!("config: {}\n", serde_json::to_string(&self.config).unwrap_or_default()));
        s
    }
}

pub fn discover(cfg: &RunConfig) -> Result<RunReport> {
    let data = prepare(cfg, !cfg.filters.is_empty() || cfg.noise > 0.0)?;
    discover_prepared(cfg, &data)
}

pub fn discover_prepared(cfg: &RunConfig, data: &PreparedData) -> Result<RunReport> {
    let system = data.system(cfg)?;
    let truth = data.truth(&system);
    let data_mse = data.clean.as_ref().map(|c| filters::data_mse(&data.field, c)).transpose()?;
    let mut report = RunReport {
        config: cfg.clone(),
        seeds: SeedSchedule::of(cfg),
        method: cfg.method,
        status: "ok".into(),
        equation: String::new(),
        selected: vec![],
        empty_model: false,
        trajectories: CoefficientTrajectories {
            terms: system.terms().to_vec(),
            axis: system.axis(),
            steps: system.steps().to_vec(),
            values: vec![],
            active: vec![],
        },
        std_dev: None,
        loss: f64::NAN,
        total_error_bar: None,
        coefficient_mse: None,
        data_mse,
        diff: data.diff(cfg),
        filters: data.filters.clone(),
        tbglss: None,
        baseline: None,
        baseline_curve: None,
        bands: None,
        intervals: None,
        multi_chain: None,
        truth: truth.clone(),
    };
    match cfg.method {
        Method::Tbglss => {
            let options = data.options(cfg);
            let out = tbglss::run_tbglss_with(&system, data.thresholds(cfg), cfg.sampler.with_seed(cfg.seed), &options)?;
            report.trajectories = out.report.trajectories.clone();
            report.std_dev = Some(out.report.variance.iter().map(|v| v.iter().map(|s| s.sqrt()).collect()).collect());
            report.loss = out.report.loss;
            report.total_error_bar = Some(out.report.total_error_bar);
            if let Some(ens) = &out.ensemble {
                report.bands = Some(uncertainty::error_bands(ens)?);
                if let Some(b) = cfg.bootstrap {
                    let cis = uncertainty::ensemble_median_cis(ens, b.level, b.n_resamples, cfg.bootstrap_seed())?;
                    report.intervals = Some(
                        ens.layout.terms.iter().cloned().zip(cis).map(|(term, intervals)| TermIntervals { term, intervals }).collect(),
                    );
                }
                if cfg.chains > 0 {
                    if let Some(sub) = &out.system {
                        let k = options.chain_multiplier.max(1);
                        let long = cfg.sampler.with_seed(cfg.seed).with_chain(cfg.sampler.n_iterations * k, cfg.sampler.n_burnin * k);
                        report.multi_chain = Some(uncertainty::multi_chain_medians(sub, &long, cfg.chains)?);
                    }
                }
            }
            report.tbglss = Some(out.report);
        }
        Method::Sgtr | Method::GroupLasso => {
            let (fit, curve) = match (cfg.method, cfg.select_by_loss) {
                (Method::Sgtr, true) => {
                    let grid = selection::default_grid(SweepAxis::SgtrThreshold, &system);
                    let (f, c) = selection::best_sgtr(&system, &grid, &cfg.sgtr)?;
                    (f, Some(c))
                }
                (Method::Sgtr, false) => (baselines::sgtr(&system, &cfg.sgtr)?, None),
                (_, true) => {
                    let grid = selection::default_grid(SweepAxis::Lambda, &system);
                    let (f, c) = selection::best_group_lasso(&system, &grid, &cfg.group_lasso)?;
                    (f, Some(c))
                }
                (_, false) => (baselines::group_lasso(&system, &cfg.group_lasso)?.fit, None),
            };
            report.trajectories = fit.trajectories.clone();
            report.loss = selection::baseline_loss(&system, &fit, selection::EPSILON)?;
            report.baseline = Some(fit);
            report.baseline_curve = curve;
        }
    }
    report.selected = report.trajectories.support().iter().map(|t| t.to_string()).collect();
    report.equation = report.trajectories.render();
    report.empty_model = report.selected.is_empty();
    if report.empty_model {
        report.status = "no terms selected".into();
    }
    report.coefficient_mse = truth.as_ref().map(|t| selection::coefficient_mse(&report.trajectories, t)).transpose()?;
    Ok(report)
}

/// Method implied by a sweep axis, with the configured fixed parameters.
pub fn sweep_method(cfg: &RunConfig, data: &PreparedData, axis: SweepAxis) -> SweepMethod {
    match axis {
        SweepAxis::TRms | SweepAxis::TGe => SweepMethod::Tbglss {
            thresholds: data.thresholds(cfg),
            config: cfg.sampler.with_seed(cfg.seed),
            options: data.options(cfg),
        },
        SweepAxis::SgtrThreshold => SweepMethod::Sgtr { config: cfg.sgtr },
        SweepAxis::Lambda => SweepMethod::GroupLasso { config: cfg.group_lasso },
    }
}

/// Parameter sweep over `grid` (default grid when `None`).
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, grid: Option<&[f64]>) -> Result<SelectionCurve> {
    let data = prepare(cfg, false)?;
    let system = data.system(cfg)?;
    let truth = data.truth(&system);
    let grid = grid.map(|g| g.to_vec()).unwrap_or_else(|| selection::default_grid(axis, &system));
    selection::sweep(&system, axis, &grid, &sweep_method(cfg, &data, axis), truth.as_ref())
}

/// Data-MSE sweep of one filter family against the clean scenario field.
pub fn filter_sweep(cfg: &RunConfig, family: FilterFamily, grid: Option<&[f64]>, axis: GridAxis) -> Result<FilterCurve> {
    let mut base = cfg.clone();
    base.filters.clear();
    let data = prepare(&base, true)?;
    let clean = data.clean.as_ref().ok_or_else(|| Error::InvalidArgument("filter sweeps need a preset scenario for the clean reference".into()))?;
    let grid = grid.map(|g| g.to_vec()).unwrap_or_else(|| family.default_grid());
    filters::filter_sweep(&data.field, clean, family, &grid, axis)
}

/// One row per step: coordinate, then `<term>`, `<term>_sd` (tBGL-SS) and
/// `<term>_true` (known scenario) for every library term.
pub fn write_report_csv(report: &RunReport, path: &std::path::Path) -> Result<()> {
    let tr = &report.trajectories;
    let mut w = csv::Writer::from_path(path)?;
    let axis = match tr.axis {
        crate::library::Axis::Time => "t",
        crate::library::Axis::Space => "x",
    };
    let mut header = vec![axis.to_string()];
    for t in &tr.terms {
        header.push(t.to_string());
        if report.std_dev.is_some() {
            header.push(format!("{t}_sd"));
        }
        if report.truth.is_some() {
            header.push(format!("{t}_true"));
        }
    }
    w.write_record(&header)?;
    for (i, s) in tr.steps.iter().enumerate() {
        let mut rec = vec![s.to_string()];
        for (g, t) in tr.terms.iter().enumerate() {
            rec.push(tr.values[g][i].to_string());
            if let Some(sd) = &report.std_dev {
                rec.push(sd[g][i].to_string());
            }
            if let Some(truth) = &report.truth {
                let v = truth.terms.iter().position(|s| s == t).map_or(0.0, |k| truth.values[k][i]);
                rec.push(v.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `trajectories.csv` and `summary.txt` into `dir`.
pub fn write_report_files(report: &RunReport, dir: &std::path::Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let (json, csv_path, txt) = (dir.join("report.json"), dir.join("trajectories.csv"), dir.join("summary.txt"));
    std::fs::write(&json, report.to_json()?)?;
    write_report_csv(report, &csv_path)?;
    std::fs::write(&txt, report.summary())?;
    Ok(vec![json, csv_path, txt])
}
