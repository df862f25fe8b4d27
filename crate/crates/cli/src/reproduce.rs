//! Batch regeneration of every experiment as plot-ready CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use vcpde::differentiation::GridAxis;
use vcpde::filters::{FilterFamily, FilterSpec};
use vcpde::pde_solvers::Family;
use vcpde::pipeline::{self, Method, RunConfig, RunReport};
use vcpde::selection::SweepAxis;
use vcpde::tbglss::ThresholdSpec;

use crate::args::{ReproduceArgs, OUTPUT_ROOT_VAR};
use crate::commands::write_manifest;
use crate::{CliError, CliResult};

const PARTS: [&str; 5] = ["burgers", "ad", "ks", "filters", "selection"];
const METHODS: [Method; 3] = [Method::Tbglss, Method::Sgtr, Method::GroupLasso];

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Tbglss => "tbglss",
        Method::Sgtr => "sgtr",
        Method::GroupLasso => "group_lasso",
    }
}

struct Table {
    rows: String,
}

impl Table {
    fn new() -> Self {
        Self { rows: "part,family,noise,method,filter,selected,coefficient_mse,loss,data_mse\n".into() }
    }

    fn push(&mut self, part: &str, cfg: &RunConfig, r: &RunReport) {
        let fam = cfg.family.map(|f| f.to_string()).unwrap_or_default();
        let filt: Vec<String> = r.filters.iter().map(FilterSpec::label).collect();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let _ = writeln!(
            self.rows,
            "{part},{fam},{},{},{},{},{},{:e},{}",
            cfg.noise,
            method_name(r.method),
            filt.join(" "),
            r.selected.join(" "),
            opt(r.coefficient_mse),
            r.loss,
            opt(r.data_mse),
        );
    }
}

fn run_one(dir: &Path, part: &str, cfg: &RunConfig, table: &mut Table) -> CliResult<()> {
    let mut cfg = cfg.clone();
    cfg.output_dir = Some(dir.to_path_buf());
    let report = pipeline::discover(&cfg)?;
    let files = pipeline::write_report_files(&report, dir)?;
    write_manifest(dir, "reproduce-paper", &cfg, &files, json!({ "equation": report.equation, "selected": report.selected }))?;
    println!("{part:<10} {:<22} noise {:<7} {:<12} {}", cfg.family.map(|f| f.to_string()).unwrap_or_default(), cfg.noise, method_name(cfg.method), report.equation);
    table.push(part, &cfg, &report);
    Ok(())
}

fn family_runs(root: &Path, seed: u64, part: &str, family: Family, noises: &[f64], table: &mut Table) -> CliResult<()> {
    for &noise in noises {
        for m in METHODS {
            let cfg = RunConfig { noise, seed, method: m, ..RunConfig::for_family(family) };
            let dir = root.join(part).join(format!("noise_{noise}")).join(method_name(m));
            run_one(&dir, part, &cfg, table)?;
        }
    }
    Ok(())
}

fn filter_study(root: &Path, seed: u64, table: &mut Table) -> CliResult<()> {
    let base = RunConfig { noise: 0.05, seed, ..RunConfig::for_family(Family::Burgers) };
    let dir = root.join("filters");
    std::fs::create_dir_all(&dir)?;
    let mut files = vec![];
    let mut results = serde_json::Map::new();
    for family in [FilterFamily::MovingAverage, FilterFamily::SavitzkyGolay, FilterFamily::ZeroPhaseLowpass] {
        let curve = pipeline::filter_sweep(&base, family, None, GridAxis::Time)?;
        let name = format!("{}.csv", family.name());
        curve.write_csv(&dir.join(&name))?;
        println!("filters    {:<22} argmin {:?} min mse {:?}", family.name(), curve.argmin, curve.min_mse);
        results.insert(family.name().into(), json!({ "argmin": curve.argmin, "min_mse": curve.min_mse, "unfiltered_mse": curve.unfiltered_mse }));
        files.push(dir.join(name));
    }
    write_manifest(&dir, "reproduce-paper", &base, &files, serde_json::Value::Object(results))?;
    for (label, filters) in [("unfiltered", vec![]), ("moving_average_13", vec![FilterSpec::moving_average(13)])] {
        let cfg = RunConfig { filters, ..base.clone() };
        run_one(&dir.join(label), "filters", &cfg, table)?;
    }
    Ok(())
}

fn selection_study(root: &Path, seed: u64) -> CliResult<()> {
    let cfg = RunConfig {
        seed,
        thresholds: Some(ThresholdSpec { t_rms: Some(0.01), t_ge: None }),
        ..RunConfig::for_family(Family::AdvectionDiffusion)
    };
    let dir = root.join("selection");
    std::fs::create_dir_all(&dir)?;
    let grid = vcpde::field::linspace(0.02, 0.22, 11);
    let curve = pipeline::sweep(&cfg, SweepAxis::TGe, Some(&grid))?;
    let csv = dir.join("t_ge.csv");
    curve.write_csv(&csv)?;
    for p in &curve.points {
        println!("selection  t_ge {:<8.3} loss {:>12.5e}  support {}", p.value, p.loss.unwrap_or(f64::NAN), p.support.join(" "));
    }
    let at = |i: Option<usize>| i.map(|i| curve.grid[i]);
    let results = json!({
        "argmin_loss": at(curve.argmin_loss),
        "argmin_total_error_bar": at(curve.argmin_total_error_bar),
        "argmin_coefficient_mse": at(curve.argmin_coefficient_mse),
    });
    write_manifest(&dir, "reproduce-paper", &cfg, &[csv], results)
}

pub fn run(a: &ReproduceArgs) -> CliResult<()> {
    let parts: Vec<String> = match &a.only {
        Some(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
        None => PARTS.iter().map(|p| p.to_string()).collect(),
    };
    if let Some(bad) = parts.iter().find(|p| !PARTS.contains(&p.as_str())) {
        return Err(CliError::Validation(format!("unknown part '{bad}' (burgers, ad, ks, filters, selection)")));
    }
    let root = a.out.clone().unwrap_or_else(|| {
        std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")).join("reproduce-paper")
    });
    std::fs::create_dir_all(&root)?;
    let mut table = Table::new();
    for part in &parts {
        match part.as_str() {
            "burgers" => family_runs(&root, a.seed, "burgers", Family::Burgers, &[0.0, 0.01, 0.05], &mut table)?,
            "ad" => family_runs(&root, a.seed, "ad", Family::AdvectionDiffusion, &[0.0, 0.01, 0.02], &mut table)?,
            "ks" => family_runs(&root, a.seed, "ks", Family::KuramotoSivashinsky, &[0.0, 0.0001], &mut table)?,
            "filters" => filter_study(&root, a.seed, &mut table)?,
            _ => selection_study(&root, a.seed)?,
        }
    }
    std::fs::write(root.join("summary.csv"), table.rows)?;
    println!("wrote {}", root.display());
    Ok(())
}
