use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vcpde::differentiation::{DiffConfig, DiffMethod, GridAxis};
use vcpde::filters::{FilterKind, FilterSpec, DEFAULT_BUTTERWORTH_ORDER, DEFAULT_POLYORDER};
use vcpde::pipeline::{BootstrapSettings, RunConfig};
use vcpde::tbglss::ThresholdSpec;

use crate::{CliError, CliResult};

/// Default output root when `--out` is not given.
pub const OUTPUT_ROOT_VAR: &str = "VCPDE_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "vcpde", version, about = "Discover PDEs with varying coefficients from gridded data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve a preset scenario, add noise and write the dataset.
    Simulate(RunArgs),
    /// Apply a denoising filter to a dataset and write the result.
    Filter(FilterArgs),
    /// Run equation discovery and write the report.
    Discover(RunArgs),
    /// Sweep a method parameter or a filter parameter.
    Sweep(SweepArgs),
    /// Regenerate every experiment as plot-ready CSV.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// TOML configuration file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset scenario: burgers, advection_diffusion (ad), kuramoto_sivashinsky (ks).
    #[arg(long)]
    pub family: Option<String>,
    /// Dataset directory (CSV) or JSON file.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub nt: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset container: csv or json.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// tbglss, sgtr or group_lasso.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub t_rms: Option<f64>,
    #[arg(long)]
    pub t_ge: Option<f64>,
    /// Preprocessing filter, e.g. `moving_average:13`, `savitzky_golay:37`,
    /// `lowpass:0.0725`; append `:space` to filter along x. Repeatable.
    #[arg(long = "filter")]
    pub filters: Vec<String>,
    /// clean, noisy, wide, or `poly:WX:DX:WT:DT`.
    #[arg(long)]
    pub diff: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Bootstrap intervals for every retained coefficient.
    #[arg(long)]
    pub bootstrap: bool,
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Independent final chains for the pooled-median mode.
    #[arg(long)]
    pub chains: Option<usize>,
    /// SGTR threshold or group lasso penalty, used instead of loss-based selection.
    #[arg(long)]
    pub fixed_parameter: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Filter spec as in `discover --filter`. Repeatable; applied in order.
    #[arg(long = "filter", required = true)]
    pub filters: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: SweepRunArgs,
    /// Method parameter to sweep: t_rms, t_ge, lambda, sgtr_threshold.
    #[arg(long, conflicts_with = "filter")]
    pub axis: Option<String>,
    /// `lo:hi:n`, n evenly spaced values.
    #[arg(long)]
    pub range: Option<String>,
    /// Comma-separated values.
    #[arg(long)]
    pub values: Option<String>,
    /// Filter family to sweep: moving_average, savitzky_golay, zero_phase_lowpass.
    #[arg(long)]
    pub filter: Option<String>,
    /// `start:stop:step` odd window widths.
    #[arg(long)]
    pub windows: Option<String>,
    /// Filter axis for filter sweeps: time or space.
    #[arg(long, default_value = "time")]
    pub filter_axis: String,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SweepRunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub t_rms: Option<f64>,
    #[arg(long)]
    pub t_ge: Option<f64>,
    #[arg(long)]
    pub diff: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of parts: burgers, ad, ks, filters, selection (comma-separated).
    #[arg(long)]
    pub only: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| bad(format!("cannot parse {what} from '{s}'")))
}

/// `kind:param[:axis]`.
pub fn parse_filter(s: &str) -> CliResult<FilterSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(bad(format!("filter spec '{s}' should look like kind:param[:axis]")));
    }
    let kind = match parts[0] {
        "moving_average" | "ma" => FilterKind::MovingAverage { window: parse_num(parts[1], "window")? },
        "savitzky_golay" | "savgol" | "sg" => {
            FilterKind::SavitzkyGolay { window: parse_num(parts[1], "window")?, polyorder: DEFAULT_POLYORDER }
        }
        "lowpass" | "zero_phase_lowpass" | "filtfilt" => {
            FilterKind::ZeroPhaseLowpass { cutoff: parse_num(parts[1], "cutoff")?, order: DEFAULT_BUTTERWORTH_ORDER }
        }
        other => return Err(bad(format!("unknown filter '{other}'"))),
    };
    let axis = match parts.get(2) {
        None => GridAxis::Time,
        Some(a) => parse_axis(a)?,
    };
    let spec = FilterSpec { kind, axis };
    spec.validate()?;
    Ok(spec)
}

pub fn parse_axis(s: &str) -> CliResult<GridAxis> {
    match s {
        "time" | "t" => Ok(GridAxis::Time),
        "space" | "x" => Ok(GridAxis::Space),
        _ => Err(bad(format!("unknown axis '{s}' (time, space)"))),
    }
}

pub fn parse_diff(s: &str) -> CliResult<DiffConfig> {
    match s {
        "clean" | "fd" => Ok(DiffConfig::clean()),
        "noisy" => Ok(DiffConfig::noisy()),
        "wide" => Ok(DiffConfig::wide()),
        _ => {
            let p: Vec<&str> = s.split(':').collect();
            if p.len() != 5 || p[0] != "poly" {
                return Err(bad(format!("diff '{s}' should be clean, noisy, wide or poly:WX:DX:WT:DT")));
            }
            Ok(DiffConfig {
                space: DiffMethod::PolyFit { width: parse_num(p[1], "width")?, degree: parse_num(p[2], "degree")? },
                time: DiffMethod::PolyFit { width: parse_num(p[3], "width")?, degree: parse_num(p[4], "degree")? },
            })
        }
    }
}

/// `lo:hi:n` evenly spaced, inclusive.
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let p: Vec<&str> = s.split(':').collect();
    if p.len() != 3 {
        return Err(bad(format!("range '{s}' should be lo:hi:n")));
    }
    let (lo, hi): (f64, f64) = (parse_num(p[0], "range start")?, parse_num(p[1], "range end")?);
    let n: usize = parse_num(p[2], "range count")?;
    if n == 0 || (n > 1 && !(hi > lo)) {
        return Err(bad(format!("range '{s}' is empty")));
    }
    Ok(vcpde::field::linspace(lo, hi, n))
}

/// `start:stop:step` integer windows, inclusive.
pub fn parse_windows(s: &str) -> CliResult<Vec<f64>> {
    let p: Vec<&str> = s.split(':').collect();
    if p.len() != 3 {
        return Err(bad(format!("windows '{s}' should be start:stop:step")));
    }
    let (a, b, step): (usize, usize, usize) = (parse_num(p[0], "start")?, parse_num(p[1], "stop")?, parse_num(p[2], "step")?);
    if step == 0 || b < a {
        return Err(bad(format!("windows '{s}' is empty")));
    }
    Ok((a..=b).step_by(step).map(|w| w as f64).collect())
}

pub fn parse_values(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|v| parse_num(v, "value")).collect()
}

/// Config file (if any) merged under command-line overrides.
pub fn base_config(data: &DataArgs) -> CliResult<RunConfig> {
    let mut cfg = match &data.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(f) = &data.family {
        cfg.family = Some(f.parse()?);
        cfg.dataset = None;
    }
    if let Some(d) = &data.dataset {
        cfg.dataset = Some(d.clone());
        if data.family.is_none() {
            cfg.family = None;
        }
    }
    if let Some(v) = data.noise {
        cfg.noise = v;
    }
    if let Some(v) = data.seed {
        cfg.seed = v;
    }
    if data.nx.is_some() {
        cfg.nx = data.nx;
    }
    if data.nt.is_some() {
        cfg.nt = data.nt;
    }
    if let Some(o) = &data.out {
        cfg.output_dir = Some(o.clone());
    }
    if let Some(f) = &data.format {
        cfg.dataset_format = f.parse()?;
    }
    Ok(cfg)
}

pub fn read_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| bad(format!("config {}: {e}", path.display())))
}

fn apply_sampler(cfg: &mut RunConfig, iterations: Option<usize>, burnin: Option<usize>) {
    if let Some(n) = iterations {
        cfg.sampler.n_iterations = n;
    }
    if let Some(b) = burnin {
        cfg.sampler.n_burnin = b;
    }
}

fn apply_thresholds(cfg: &mut RunConfig, t_rms: Option<f64>, t_ge: Option<f64>) {
    if t_rms.is_some() || t_ge.is_some() {
        let mut th = cfg.thresholds.unwrap_or(ThresholdSpec { t_rms: None, t_ge: None });
        if t_rms.is_some() {
            th.t_rms = t_rms;
        }
        if t_ge.is_some() {
            th.t_ge = t_ge;
        }
        cfg.thresholds = Some(th);
    }
}

pub fn run_config(a: &RunArgs) -> CliResult<RunConfig> {
    let mut cfg = base_config(&a.data)?;
    if let Some(m) = &a.method {
        cfg.method = m.parse()?;
    }
    apply_thresholds(&mut cfg, a.t_rms, a.t_ge);
    if !a.filters.is_empty() {
        cfg.filters = a.filters.iter().map(|f| parse_filter(f)).collect::<CliResult<_>>()?;
    }
    if let Some(d) = &a.diff {
        cfg.diff = Some(parse_diff(d)?);
    }
    apply_sampler(&mut cfg, a.iterations, a.burnin);
    if a.bootstrap || a.resamples.is_some() || a.level.is_some() {
        let mut b = cfg.bootstrap.unwrap_or_default();
        if let Some(r) = a.resamples {
            b.n_resamples = r;
        }
        if let Some(l) = a.level {
            b.level = l;
        }
        cfg.bootstrap = Some(BootstrapSettings { ..b });
    }
    if let Some(k) = a.chains {
        cfg.chains = k;
    }
    if let Some(p) = a.fixed_parameter {
        cfg.select_by_loss = false;
        cfg.sgtr.threshold = p;
        cfg.group_lasso.lambda = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn sweep_config(a: &SweepRunArgs) -> CliResult<RunConfig> {
    let mut cfg = base_config(&a.data)?;
    apply_thresholds(&mut cfg, a.t_rms, a.t_ge);
    if let Some(d) = &a.diff {
        cfg.diff = Some(parse_diff(d)?);
    }
    apply_sampler(&mut cfg, a.iterations, a.burnin);
    cfg.validate()?;
    Ok(cfg)
}

/// `--out`, else `$VCPDE_OUTPUT_ROOT/<name>`, else `runs/<name>`.
pub fn output_dir(cfg: &RunConfig, name: &str) -> PathBuf {
    if let Some(o) = &cfg.output_dir {
        return o.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(name)
}
