//! Two-axis parameter sweeps over scalar systems, pairing each analytic
//! verdict with an optional simulated one.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{analytic_1d, StabilityVerdict};
use crate::diffusion::DiffusionParams;
use crate::error::{Result, StabError};
use crate::exec::{cell_seed, map_indexed, Execution};
use crate::io::fmt_f64;
use crate::plant::{ExpertPolicy, PlantModel};
use crate::sim::{classify_empirical, simulate, CouplingConfig, CouplingMode, EmpiricalVerdict};

pub const MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    A,
    B,
    K,
    Sigma,
    G,
    Alpha,
    KPrime,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::A => "A",
            Axis::B => "B",
            Axis::K => "K",
            Axis::Sigma => "sigma",
            Axis::G => "g",
            Axis::Alpha => "alpha",
            Axis::KPrime => "kprime",
        }
    }

    fn must_be_positive(self) -> bool {
        matches!(self, Axis::Sigma | Axis::G | Axis::Alpha | Axis::KPrime)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = StabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A" | "a" => Axis::A,
            "B" | "b" => Axis::B,
            "K" | "k" => Axis::K,
            "sigma" => Axis::Sigma,
            "g" => Axis::G,
            "alpha" => Axis::Alpha,
            "kprime" => Axis::KPrime,
            other => {
                return Err(StabError::param(format!(
                    "unknown axis '{other}' (expected one of A, B, K, sigma, g, alpha, kprime)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub axis: Axis,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisSpec {
    /// Evenly spaced values; a single step yields just `min`.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let span = self.max - self.min;
        let last = (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.min + span * i as f64 / last).collect()
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.steps == 0 || self.steps > MAX_STEPS {
            out.push(format!("axis {} needs 1..={MAX_STEPS} steps, got {}", self.axis, self.steps));
        }
        if !self.min.is_finite() || !self.max.is_finite() {
            out.push(format!("axis {} bounds must be finite", self.axis));
        }
        if self.axis.must_be_positive() && !(self.min > 0.0 && self.max > 0.0) {
            out.push(format!("axis {} must stay positive", self.axis));
        }
        out
    }
}

impl FromStr for AxisSpec {
    type Err = StabError;

    /// `name:min:max:steps`, e.g. `A:0.5:4:64`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(StabError::param(format!("axis spec '{s}' must look like name:min:max:steps")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| StabError::param(format!("axis spec '{s}': '{p}' is not a number")))
        };
        let spec = AxisSpec {
            axis: parts[0].trim().parse()?,
            min: num(parts[1])?,
            max: num(parts[2])?,
            steps: parts[3]
                .trim()
                .parse()
                .map_err(|_| StabError::param(format!("axis spec '{s}': steps must be an integer")))?,
        };
        let problems = spec.problems();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(StabError::param(problems.join("; ")))
        }
    }
}

/// Fixed scalar parameters for every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBase {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub sigma: f64,
    pub g: f64,
    pub alpha: f64,
    /// When set, `K` is re-derived per cell so that `A − BK` equals this
    /// value.
    #[serde(default)]
    pub closed_loop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSettings {
    pub mode: CouplingMode,
    pub dt: f64,
    pub horizon: f64,
    pub e0: f64,
    pub u0: f64,
    pub seed: u64,
}

impl Default for EmpiricalSettings {
    fn default() -> Self {
        Self { mode: CouplingMode::PerStep, dt: 1e-3, horizon: 20.0, e0: 1.0, u0: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub empirical: Option<EmpiricalSettings>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub v1: f64,
    pub v2: f64,
    pub analytic: StabilityVerdict,
    pub empirical: Option<EmpiricalVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    /// Row-major: `axis1` outer, `axis2` inner.
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// CSV with header
    /// `axis1,axis2,analytic_label,analytic_margin_min,empirical_label,empirical_rate`.
    /// Cells without a simulation report `skipped,NaN`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "axis1,axis2,analytic_label,analytic_margin_min,empirical_label,empirical_rate")?;
        for c in &self.cells {
            let (elabel, erate) = match &c.empirical {
                Some(v) => (v.label.as_str(), fmt_f64(v.rate)),
                None => ("skipped", "NaN".to_string()),
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(c.v1),
                fmt_f64(c.v2),
                c.analytic.label,
                fmt_f64(c.analytic.margin_min()),
                elabel,
                erate
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct CellParams {
    a: f64,
    b: f64,
    k: f64,
    sigma: f64,
    g: f64,
    alpha: f64,
}

fn cell_params(base: &SweepBase, assignments: [(Axis, f64); 2]) -> Result<CellParams> {
    let mut p = CellParams { a: base.a, b: base.b, k: base.k, sigma: base.sigma, g: base.g, alpha: base.alpha };
    let mut kprime = None;
    for (axis, v) in assignments {
        match axis {
            Axis::A => p.a = v,
            Axis::B => p.b = v,
            Axis::K => p.k = v,
            Axis::Sigma => p.sigma = v,
            Axis::G => p.g = v,
            Axis::Alpha => p.alpha = v,
            Axis::KPrime => kprime = Some(v),
        }
    }
    if let Some(kp) = kprime {
        p.sigma = p.g * p.alpha.sqrt() / kp.sqrt();
    }
    if let Some(cl) = base.closed_loop {
        if p.b == 0.0 {
            return Err(StabError::param("a fixed closed loop needs B ≠ 0"));
        }
        p.k = (p.a - cl) / p.b;
    }
    Ok(p)
}

fn validate(base: &SweepBase, axis1: &AxisSpec, axis2: &AxisSpec) -> Result<()> {
    let mut problems = axis1.problems();
    problems.extend(axis2.problems());
    let axes = [axis1.axis, axis2.axis];
    if axis1.axis == axis2.axis {
        problems.push(format!("both axes sweep {}", axis1.axis));
    }
    if axes.contains(&Axis::KPrime) {
        for clash in [Axis::Sigma, Axis::G, Axis::Alpha] {
            if axes.contains(&clash) {
                problems.push(format!("kprime axis conflicts with a {clash} axis"));
            }
        }
    }
    if base.closed_loop.is_some() && axes.contains(&Axis::K) {
        problems.push("a fixed closed loop determines K; it cannot also be an axis".into());
    }
    for (name, v) in [("sigma", base.sigma), ("g", base.g), ("alpha", base.alpha)] {
        if !(v > 0.0 && v.is_finite()) {
            problems.push(format!("base {name} must be positive, got {v}"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(StabError::param(problems.join("; ")))
    }
}

fn simulate_cell(p: &CellParams, settings: &EmpiricalSettings, seed: u64) -> Result<EmpiricalVerdict> {
    let plant = PlantModel::scalar(p.a, p.b)?;
    let policy = ExpertPolicy::scalar(p.k, p.sigma)?;
    let diffusion = DiffusionParams::deterministic(p.g, p.alpha);
    let mut cfg =
        CouplingConfig::new(settings.mode, settings.dt, settings.horizon, vec![settings.e0], vec![settings.u0]);
    cfg.seed = seed;
    classify_empirical(&simulate(&plant, &policy, &diffusion, &cfg)?)
}

/// Evaluates every grid cell; output order is fixed by grid index whatever
/// the execution strategy.
pub fn sweep_region(
    base: &SweepBase,
    axis1: &AxisSpec,
    axis2: &AxisSpec,
    options: &SweepOptions,
) -> Result<SweepResult> {
    validate(base, axis1, axis2)?;
    let xs = axis1.values();
    let ys = axis2.values();
    let cols = ys.len();

    let cells = map_indexed(xs.len() * cols, options.exec, |idx| -> Result<SweepCell> {
        let (v1, v2) = (xs[idx / cols], ys[idx % cols]);
        let p = cell_params(base, [(axis1.axis, v1), (axis2.axis, v2)])?;
        let analytic = analytic_1d(p.a, p.b, p.k, p.sigma, p.g, p.alpha)?;
        let empirical = match &options.empirical {
            Some(settings) => Some(simulate_cell(&p, settings, cell_seed(settings.seed, idx))?),
            None => None,
        };
        Ok(SweepCell { v1, v2, analytic, empirical })
    });

    Ok(SweepResult { axis1: *axis1, axis2: *axis2, cells: cells.into_iter().collect::<Result<_>>()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Label;

    fn grid_base() -> SweepBase {
        SweepBase { a: 2.0, b: 1.0, k: 3.0, sigma: 1.0, g: 1.0, alpha: 1.0, closed_loop: Some(-1.0) }
    }

    #[test]
    fn axis_spec_parsing() {
        let s: AxisSpec = "A:0.5:4:64".parse().unwrap();
        assert_eq!((s.axis, s.min, s.max, s.steps), (Axis::A, 0.5, 4.0, 64));
        assert_eq!(s.values().len(), 64);
        assert_eq!(*s.values().last().unwrap(), 4.0);
        assert!("Q:0:1:4".parse::<AxisSpec>().is_err());
        assert!("A:0:1".parse::<AxisSpec>().is_err());
        assert!("sigma:-1:1:4".parse::<AxisSpec>().is_err());
        assert!("A:0:1:0".parse::<AxisSpec>().is_err());
        assert_eq!("kprime:2:9:1".parse::<AxisSpec>().unwrap().values(), vec![2.0]);
    }

    #[test]
    fn conflicting_axes_are_rejected() {
        let kp: AxisSpec = "kprime:0.1:6:4".parse().unwrap();
        let sig: AxisSpec = "sigma:0.1:6:4".parse().unwrap();
        let err = sweep_region(&grid_base(), &kp, &sig, &SweepOptions::default()).unwrap_err();
        assert!(err.to_string().contains("conflicts"));
        let k: AxisSpec = "K:0:6:4".parse().unwrap();
        assert!(sweep_region(&grid_base(), &kp, &k, &SweepOptions::default()).is_err());
    }

    #[test]
    fn single_cell_is_one_analytic_call() {
        let a: AxisSpec = "A:2:2:1".parse().unwrap();
        let kp: AxisSpec = "kprime:3:3:1".parse().unwrap();
        let res = sweep_region(&grid_base(), &a, &kp, &SweepOptions::default()).unwrap();
        assert_eq!(res.cells.len(), 1);
        let direct = analytic_1d(2.0, 1.0, 3.0, 1.0 / 3f64.sqrt(), 1.0, 1.0).unwrap();
        assert_eq!(res.cells[0].analytic.label, direct.label);
        for (key, v) in &direct.margins {
            assert!((res.cells[0].analytic.margins[key] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_boundary_is_kprime_equals_a() {
        let a: AxisSpec = "A:0.5:4:32".parse().unwrap();
        let kp: AxisSpec = "kprime:0.1:6:32".parse().unwrap();
        let res = sweep_region(&grid_base(), &a, &kp, &SweepOptions::default()).unwrap();
        for c in &res.cells {
            if (c.v2 - c.v1).abs() < 1e-6 {
                continue;
            }
            let expected = if c.v2 > c.v1 { Label::Stable } else { Label::Unstable };
            assert_eq!(c.analytic.label, expected, "A={} K'={}", c.v1, c.v2);
        }
    }

    #[test]
    fn sequential_and_parallel_sweeps_match() {
        let a: AxisSpec = "A:0.5:4:6".parse().unwrap();
        let kp: AxisSpec = "kprime:0.1:6:6".parse().unwrap();
        let settings = EmpiricalSettings { horizon: 5.0, ..Default::default() };
        let seq = SweepOptions { empirical: Some(settings.clone()), exec: Execution::Sequential };
        let par = SweepOptions { empirical: Some(settings), exec: Execution::with_jobs(4) };
        assert_eq!(
            sweep_region(&grid_base(), &a, &kp, &seq).unwrap(),
            sweep_region(&grid_base(), &a, &kp, &par).unwrap()
        );
    }

    #[test]
    fn csv_layout() {
        let a: AxisSpec = "A:1:2:2".parse().unwrap();
        let kp: AxisSpec = "kprime:3:3:1".parse().unwrap();
        let res = sweep_region(&grid_base(), &a, &kp, &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "axis1,axis2,analytic_label,analytic_margin_min,empirical_label,empirical_rate");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,3,stable,"));
        assert!(lines[1].ends_with(",skipped,NaN"));
    }
}
