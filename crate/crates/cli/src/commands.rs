use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use stab_core::analysis::{
    analytic_1d, analytic_ndim, classify_table_row, sweep_region, AxisSpec, EmpiricalSettings, Label,
    SweepOptions,
};
use stab_core::dataset::{load_demonstrations, quality_report};
use stab_core::exec::Execution;
use stab_core::io::fmt_f64;
use stab_core::plant::ExpertPolicy;
use stab_core::sim::{
    classify_about, mode_equilibrium, simulate as run_sim, CouplingMode, Trajectory, RATE_DEADBAND,
};

use crate::config::{RunConfig, System};
use crate::svg::{self, Series};
use crate::{CliError, EXIT_UNSTABLE};

/// Phase-plane polylines keep at most this many vertices per series.
const SVG_POINTS: usize = 2000;

fn load(path: &Path, seed: Option<String>) -> Result<(RunConfig, System), CliError> {
    let mut config = RunConfig::load(path)?;
    config.apply_seed_override(seed)?;
    let system = config.build()?;
    Ok((config, system))
}

fn output_path(flag: Option<&Path>, fallback: &Option<String>, what: &str) -> Result<PathBuf, CliError> {
    flag.map(Path::to_path_buf)
        .or_else(|| fallback.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Validation(format!("no {what} output path (use -o or output.csv)")))
}

/// Writes through a sibling temp file and renames it into place.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(io_err)?;
        buf.flush().map_err(io_err)?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(path).map(|m| m.permissions().mode()).unwrap_or(0o644);
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(mode)).map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn print_json(mut value: Value, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    value["config"] = serde_json::to_value(config).expect("config serializes");
    writeln!(out, "{value}").map_err(|e| CliError::Io(format!("standard output: {e}")))
}

fn empirical_verdict(
    system: &System,
    policy: &ExpertPolicy,
    traj: &Trajectory,
) -> Result<stab_core::sim::EmpiricalVerdict, CliError> {
    let (e_star, u_star) = mode_equilibrium(&system.plant, policy, &system.diffusion, traj.config.mode)?;
    Ok(classify_about(traj, &e_star, &u_star, RATE_DEADBAND)?)
}

pub fn simulate(
    config: &Path,
    output: Option<&Path>,
    seed: Option<String>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let (cfg, system) = load(config, seed)?;
    let csv_path = output_path(output, &cfg.output.csv, "trajectory")?;
    let policy = system.policy()?;
    let traj = run_sim(&system.plant, policy, &system.diffusion, &system.coupling)?;
    let verdict = empirical_verdict(&system, policy, &traj)?;
    write_atomic(&csv_path, |w| traj.write_csv(w))?;
    let mut value = serde_json::to_value(verdict).expect("verdict serializes");
    value["diverged"] = json!(traj.diverged);
    print_json(value, &cfg, out)?;
    Ok(0)
}

pub fn analyze(config: &Path, seed: Option<String>, out: &mut dyn Write) -> Result<u8, CliError> {
    let (cfg, system) = load(config, seed)?;
    let policy = system.policy()?;
    let d = &system.diffusion;
    let mut value = if system.is_scalar() {
        let p = system.scalar_base(None)?;
        let verdict = analytic_1d(p.a, p.b, p.k, p.sigma, p.g, p.alpha)?;
        let row = classify_table_row(p.a, p.a - p.b * p.k, d.kprime(p.sigma));
        let mut v = serde_json::to_value(verdict).expect("verdict serializes");
        v["table_row"] = serde_json::to_value(row).expect("row serializes");
        v
    } else {
        let verdict =
            analytic_ndim(system.plant.a(), system.plant.b(), policy.k(), policy.sigma(), d.g, d.alpha)?;
        serde_json::to_value(verdict).expect("verdict serializes")
    };
    value["kind"] = json!(if system.is_scalar() { "exact" } else { "sufficient" });
    print_json(value, &cfg, out)?;
    Ok(0)
}

pub struct SweepArgs {
    pub axis1: String,
    pub axis2: String,
    pub output: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub empirical: bool,
    pub jobs: Option<usize>,
}

fn require_scalar(system: &System, what: &str) -> Result<(), CliError> {
    if system.is_scalar() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} requires a scalar plant")))
    }
}

pub fn sweep(config: &Path, args: SweepArgs, seed: Option<String>, out: &mut dyn Write) -> Result<u8, CliError> {
    let (cfg, system) = load(config, seed)?;
    require_scalar(&system, "sweep")?;
    let axis1: AxisSpec = args.axis1.parse()?;
    let axis2: AxisSpec = args.axis2.parse()?;
    if args.jobs == Some(0) {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    let csv_path = output_path(args.output.as_deref(), &cfg.output.csv, "sweep")?;
    let base = system.scalar_base(cfg.sweep.closed_loop)?;

    let c = &system.coupling;
    let empirical = args.empirical.then(|| EmpiricalSettings {
        mode: c.mode,
        dt: c.dt,
        horizon: c.horizon,
        e0: c.e0[0],
        u0: c.u0.first().copied().unwrap_or(0.0),
        seed: c.seed,
    });
    let options = SweepOptions { empirical, exec: Execution::Parallel { jobs: args.jobs } };
    let result = sweep_region(&base, &axis1, &axis2, &options)?;

    write_atomic(&csv_path, |w| result.write_csv(w))?;
    if let Some(svg_path) = args.svg.as_deref().map(Path::to_path_buf).or_else(|| cfg.output.svg.as_ref().map(PathBuf::from)) {
        let doc = svg::region_map(&result, args.empirical);
        write_atomic(&svg_path, |w| w.write_all(doc.as_bytes()))?;
    }

    let count = |label: Label| result.cells.iter().filter(|c| c.analytic.label == label).count();
    let mut value = json!({
        "cells": result.cells.len(),
        "analytic_stable": count(Label::Stable),
        "analytic_unstable": count(Label::Unstable),
        "analytic_marginal": count(Label::Marginal),
    });
    if args.empirical {
        let agree = result
            .cells
            .iter()
            .filter(|c| c.empirical.as_ref().is_some_and(|e| e.label == c.analytic.label))
            .count();
        value["empirical_agreement"] = json!(agree);
    }
    print_json(value, &cfg, out)?;
    Ok(0)
}

fn parse_kprimes(raw: &str) -> Result<Vec<f64>, CliError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
            _ => Err(CliError::Validation(format!("K' value '{s}' must be a positive number"))),
        })
        .collect()
}

struct PhaseSeries {
    name: String,
    kprime: Option<f64>,
    traj: Trajectory,
    label: Label,
}

pub fn phase_plane(
    config: &Path,
    kprime: &str,
    output: Option<&Path>,
    svg_out: Option<&Path>,
    seed: Option<String>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let (cfg, system) = load(config, seed)?;
    require_scalar(&system, "phase plane")?;
    let kprimes = parse_kprimes(kprime)?;
    let csv_path = output_path(output, &cfg.output.csv, "phase-plane")?;
    let base = system.scalar_base(None)?;
    let policy = system.policy()?;
    let gain_scale = system.diffusion.gain_scale();

    let mut runs = Vec::with_capacity(kprimes.len() + 1);
    let mut expert_cfg = system.coupling.clone();
    expert_cfg.mode = CouplingMode::ExpertOracle;
    let traj = run_sim(&system.plant, policy, &system.diffusion, &expert_cfg)?;
    let label = empirical_verdict(&system, policy, &traj)?.label;
    runs.push(PhaseSeries { name: "expert".into(), kprime: None, traj, label });

    let mut denoise_cfg = system.coupling.clone();
    if denoise_cfg.mode == CouplingMode::ExpertOracle {
        denoise_cfg.mode = CouplingMode::PerStep;
    }
    for kp in kprimes {
        let sigma = (gain_scale / kp).sqrt();
        let series_policy = ExpertPolicy::scalar(base.k, sigma)?;
        let traj = run_sim(&system.plant, &series_policy, &system.diffusion, &denoise_cfg)?;
        let label = empirical_verdict(&system, &series_policy, &traj)?.label;
        runs.push(PhaseSeries { name: format!("kprime={}", fmt_f64(kp)), kprime: Some(kp), traj, label });
    }

    let r = system.plant.setpoint()[0];
    write_atomic(&csv_path, |w| {
        writeln!(w, "series,t,x,u")?;
        for run in &runs {
            for s in &run.traj.samples {
                writeln!(w, "{},{},{},{}", run.name, fmt_f64(s.t), fmt_f64(s.e[0] + r), fmt_f64(s.u[0]))?;
            }
        }
        Ok(())
    })?;

    if let Some(svg_path) = svg_out.map(Path::to_path_buf).or_else(|| cfg.output.svg.as_ref().map(PathBuf::from)) {
        let series: Vec<Series<'_>> = runs
            .iter()
            .map(|run| {
                let stride = run.traj.samples.len().div_ceil(SVG_POINTS).max(1);
                let n = run.traj.samples.len();
                let points = run
                    .traj
                    .samples
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i % stride == 0 || *i == n - 1)
                    .map(|(_, s)| (s.e[0] + r, s.u[0]))
                    .collect();
                Series { name: &run.name, points, bounded: run.label != Label::Unstable }
            })
            .collect();
        let doc = svg::phase_plane(&series);
        write_atomic(&svg_path, |w| w.write_all(doc.as_bytes()))?;
    }

    let summary: Vec<Value> = runs
        .iter()
        .map(|run| {
            json!({
                "series": run.name,
                "kprime": run.kprime,
                "label": run.label,
                "diverged": run.label == Label::Unstable,
                "blew_up": run.traj.diverged,
            })
        })
        .collect();
    print_json(json!({ "series": summary }), &cfg, out)?;
    Ok(0)
}

pub fn dataset_check(
    demos: &Path,
    config: &Path,
    seed: Option<String>,
    out: &mut dyn Write,
) -> Result<u8, CliError> {
    let (cfg, system) = load(config, seed)?;
    let file = File::open(demos).map_err(|e| CliError::Io(format!("cannot read {}: {e}", demos.display())))?;
    let set = load_demonstrations(BufReader::new(file))
        .map_err(|e| CliError::Validation(format!("{}: {e}", demos.display())))?;
    let report = quality_report(&system.plant, &set, system.diffusion.g, system.diffusion.alpha)?;
    let stable = report.verdict.label == Label::Stable;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["records"] = json!(set.len());
    print_json(value, &cfg, out)?;
    Ok(if stable { 0 } else { EXIT_UNSTABLE })
}
