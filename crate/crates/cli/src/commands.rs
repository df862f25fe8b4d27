use std::path::{Path, PathBuf};

use serde_json::json;
use vcpde::filters::{self, FilterFamily};
use vcpde::io::{self, Dataset, DatasetFormat};
use vcpde::pipeline::{self, RunConfig, SeedSchedule};
use vcpde::selection::SweepAxis;

use crate::args::{self, Cli, Command, FilterArgs, RunArgs, SweepArgs};
use crate::{reproduce, CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Filter(a) => filter(&a),
        Command::Discover(a) => discover(&a),
        Command::Sweep(a) => sweep(&a),
        Command::ReproducePaper(a) => reproduce::run(&a),
    }
}

/// `config.toml` holding the effective configuration.
pub fn write_config(dir: &Path, cfg: &RunConfig) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("config.toml");
    let text = toml::to_string(cfg).map_err(|e| CliError::Validation(format!("cannot render config: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}

/// `config.toml` plus `manifest.json` listing the command, config, seeds and files.
pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, files: &[PathBuf], extra: serde_json::Value) -> CliResult<()> {
    let cfg_path = write_config(dir, cfg)?;
    let names: Vec<String> = files
        .iter()
        .chain(std::iter::once(&cfg_path))
        .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
        .collect();
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seeds": SeedSchedule::of(cfg),
        "files": names,
        "results": extra,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn dataset_path(dir: &Path, format: DatasetFormat) -> PathBuf {
    match format {
        DatasetFormat::Csv => dir.join("dataset"),
        DatasetFormat::Json => dir.join("dataset.json"),
    }
}

fn simulate(a: &RunArgs) -> CliResult<()> {
    let cfg = args::run_config(a)?;
    if cfg.dataset.is_some() {
        return Err(CliError::Validation("simulate needs --family, not --dataset".into()));
    }
    let (ds, clean) = pipeline::simulate(&cfg)?;
    let dir = args::output_dir(&cfg, "simulate");
    let files = io::write_dataset(&ds, &dataset_path(&dir, cfg.dataset_format), cfg.dataset_format)?;
    let mut results = json!({ "nx": ds.field.nx(), "nt": ds.field.nt() });
    if cfg.noise > 0.0 {
        let mse = filters::data_mse(&ds.field, &clean)?;
        println!("data mse vs clean: {mse:e}");
        results["data_mse"] = json!(mse);
    }
    write_manifest(&dir, "simulate", &cfg, &files, results)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn filter(a: &FilterArgs) -> CliResult<()> {
    let mut cfg = args::base_config(&a.data)?;
    cfg.filters = a.filters.iter().map(|f| args::parse_filter(f)).collect::<CliResult<_>>()?;
    cfg.validate()?;
    let (mut ds, clean) = match &cfg.dataset {
        Some(p) => (io::read_dataset(p)?, None),
        None => {
            let (ds, c) = pipeline::simulate(&cfg)?;
            (ds, Some(c))
        }
    };
    for f in &cfg.filters {
        ds.field = filters::apply_filter(&ds.field, f)?;
        ds.meta.filters.push(*f);
    }
    let dir = args::output_dir(&cfg, "filter");
    let out = Dataset { field: ds.field, meta: ds.meta };
    let files = io::write_dataset(&out, &dataset_path(&dir, cfg.dataset_format), cfg.dataset_format)?;
    let mut results = json!({ "nx": out.field.nx(), "nt": out.field.nt() });
    if let Some(c) = clean {
        let mse = filters::data_mse(&out.field, &c)?;
        println!("data mse vs clean: {mse:e}");
        results["data_mse"] = json!(mse);
    }
    write_manifest(&dir, "filter", &cfg, &files, results)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn discover(a: &RunArgs) -> CliResult<()> {
    let cfg = args::run_config(a)?;
    let report = pipeline::discover(&cfg)?;
    let dir = args::output_dir(&cfg, "discover");
    let files = pipeline::write_report_files(&report, &dir)?;
    let results = json!({
        "equation": report.equation,
        "selected": report.selected,
        "status": report.status,
        "coefficient_mse": report.coefficient_mse,
    });
    write_manifest(&dir, "discover", &cfg, &files, results)?;
    print!("{}", report.summary());
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(a: &SweepArgs) -> CliResult<()> {
    let mut cfg = args::sweep_config(&a.run)?;
    let dir = args::output_dir(&cfg, "sweep");
    std::fs::create_dir_all(&dir)?;
    let grid = match (&a.range, &a.values, &a.windows) {
        (Some(r), None, None) => Some(args::parse_range(r)?),
        (None, Some(v), None) => Some(args::parse_values(v)?),
        (None, None, Some(w)) => Some(args::parse_windows(w)?),
        (None, None, None) => None,
        _ => return Err(CliError::Validation("give at most one of --range, --values, --windows".into())),
    };
    let (csv, json_path) = (dir.join("curve.csv"), dir.join("summary.json"));
    let results = match (&a.axis, &a.filter) {
        (Some(axis), None) => {
            if a.windows.is_some() {
                return Err(CliError::Validation("--windows applies to filter sweeps".into()));
            }
            let axis: SweepAxis = axis.parse()?;
            let curve = pipeline::sweep(&cfg, axis, grid.as_deref())?;
            let ok = curve.points.iter().filter(|p| p.error.is_none()).count();
            curve.write_csv(&csv)?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&curve)?)?;
            for p in &curve.points {
                match &p.error {
                    None => println!("{:<10.5} loss {:>12.5e}  support {}", p.value, p.loss.unwrap_or(f64::NAN), p.support.join(" ")),
                    Some(e) => println!("{:<10.5} failed: {e}", p.value),
                }
            }
            if ok == 0 {
                return Err(CliError::Numerical("every sweep point failed".into()));
            }
            json!({
                "succeeded": ok,
                "argmin_loss": curve.argmin_loss.map(|i| curve.grid[i]),
                "argmin_total_error_bar": curve.argmin_total_error_bar.map(|i| curve.grid[i]),
                "argmin_coefficient_mse": curve.argmin_coefficient_mse.map(|i| curve.grid[i]),
            })
        }
        (None, Some(family)) => {
            if a.range.is_some() && a.windows.is_some() {
                return Err(CliError::Validation("give --windows or --range, not both".into()));
            }
            let family: FilterFamily = family.parse()?;
            let axis = args::parse_axis(&a.filter_axis)?;
            cfg.filters.clear();
            let curve = pipeline::filter_sweep(&cfg, family, grid.as_deref(), axis)?;
            curve.write_csv(&csv)?;
            std::fs::write(&json_path, serde_json::to_string_pretty(&curve)?)?;
            let ok = curve.points.iter().filter(|p| p.data_mse.is_some()).count();
            for p in &curve.points {
                match (p.data_mse, &p.error) {
                    (Some(m), _) => println!("{:<10.5} data mse {m:.5e}", p.parameter),
                    (None, e) => println!("{:<10.5} failed: {}", p.parameter, e.as_deref().unwrap_or("unknown")),
                }
            }
            println!("unfiltered data mse {:.5e}", curve.unfiltered_mse);
            if ok == 0 {
                return Err(CliError::Numerical("every filter setting failed".into()));
            }
            json!({ "succeeded": ok, "argmin": curve.argmin, "min_mse": curve.min_mse, "unfiltered_mse": curve.unfiltered_mse })
        }
        _ => return Err(CliError::Validation("sweep needs exactly one of --axis or --filter".into())),
    };
    write_manifest(&dir, "sweep", &cfg, &[csv, json_path], results)?;
    println!("wrote {}", dir.display());
    Ok(())
}
