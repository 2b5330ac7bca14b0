//! Fixed-step integration of the coupled plant/controller system and
//! empirical stability classification of the resulting trajectories.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::augmented_matrix;
use crate::diffusion::{action_fixed_point, effective_precision, Denoiser, DiffusionParams, Drift, RngStream};
use crate::error::{Result, StabError};
use crate::io::fmt_f64;
use crate::matrixkit::{norm2, norm2_iter, Matrix};
use crate::plant::{ExpertPolicy, PlantModel};

/// Default rate deadband (1/time) separating stable, marginal and unstable.
pub const RATE_DEADBAND: f64 = 0.02;

/// Divergence is declared once ‖e‖ or ‖u‖ exceeds this multiple of `1 + ‖e0‖`.
pub const BLOW_UP_FACTOR: f64 = 1e9;

const MIN_STEPS: f64 = 10.0;
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Apply the deterministic expert `u = −K·e` directly.
    ExpertOracle,
    /// One denoising step per plant step, warm-started from the last action.
    PerStep,
    /// Full denoising at each plant step with the state frozen.
    InnerLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub seed: u64,
    pub e0: Vec<f64>,
    #[serde(default)]
    pub u0: Vec<f64>,
}

fn default_stride() -> usize {
    1
}

impl CouplingConfig {
    pub fn new(mode: CouplingMode, dt: f64, horizon: f64, e0: Vec<f64>, u0: Vec<f64>) -> Self {
        Self { mode, dt, horizon, record_stride: 1, seed: 0, e0, u0 }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Every violated precondition, not just the first.
    pub fn problems(&self, state_dim: usize, action_dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            out.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.dt > 0.0 && self.horizon > 0.0 && self.horizon / self.dt < MIN_STEPS {
            out.push(format!(
                "horizon/dt = {} is below the minimum of {MIN_STEPS} steps",
                self.horizon / self.dt
            ));
        }
        if self.record_stride == 0 {
            out.push("record_stride must be at least 1".into());
        }
        if self.e0.len() != state_dim {
            out.push(format!("e0 has length {}, state dimension is {state_dim}", self.e0.len()));
        }
        if !self.u0.is_empty() && self.u0.len() != action_dim {
            out.push(format!("u0 has length {}, action dimension is {action_dim}", self.u0.len()));
        }
        if self.e0.iter().chain(&self.u0).any(|v| !v.is_finite()) {
            out.push("initial conditions must be finite".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub config: CouplingConfig,
    pub diverged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory always holds the initial sample")
    }

    /// CSV with header `t,e_1..e_N,u_1..u_M`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let first = &self.samples[0];
        let mut header = vec!["t".to_string()];
        header.extend((1..=first.e.len()).map(|i| format!("e_{i}")));
        header.extend((1..=first.u.len()).map(|i| format!("u_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let row: Vec<String> =
                std::iter::once(s.t).chain(s.e.iter().copied()).chain(s.u.iter().copied()).map(fmt_f64).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Stable,
    Unstable,
    Marginal,
    Inconclusive,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stable => "stable",
            Label::Unstable => "unstable",
            Label::Marginal => "marginal",
            Label::Inconclusive => "inconclusive",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalVerdict {
    /// Fitted exponential rate of ‖(e, u)‖; ±∞ for the documented special cases.
    pub rate: f64,
    pub label: Label,
    /// RMS residual of the log-norm fit.
    pub residual: f64,
}

fn validate_inputs(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
    config: &CouplingConfig,
) -> Result<()> {
    policy.check_plant(plant)?;
    diffusion.validate()?;
    if let Drift::Constant(c) = &diffusion.drift {
        if c.len() != plant.action_dim() {
            return Err(StabError::dim("drift length differs from action dimension"));
        }
    }
    let problems = config.problems(plant.state_dim(), plant.action_dim());
    if problems.is_empty() {
        Ok(())
    } else {
        Err(StabError::param(problems.join("; ")))
    }
}

/// Explicit Euler / Euler–Maruyama rollout of the coupled system.
///
/// Non-finite or runaway states end the run with `diverged = true` rather
/// than an error.
pub fn simulate(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
    config: &CouplingConfig,
) -> Result<Trajectory> {
    validate_inputs(plant, policy, diffusion, config)?;
    let m = plant.action_dim();
    let steps = config.steps();
    let dt = config.dt;
    let bound = BLOW_UP_FACTOR * (1.0 + norm2(&config.e0));
    let inner_dt = match config.mode {
        CouplingMode::InnerLoop => diffusion.inner_dt(policy)?,
        _ => 0.0,
    };

    let mut rng = RngStream::new(config.seed);
    let mut denoiser = Denoiser::new(policy, diffusion)?;
    let mut e = config.e0.clone();
    let mut u = if config.u0.is_empty() { vec![0.0; m] } else { config.u0.clone() };
    let mut u_applied = vec![0.0; m];
    let mut de = vec![0.0; e.len()];

    let mut samples = Vec::with_capacity(steps / config.record_stride + 2);
    samples.push(Sample { t: 0.0, e: e.clone(), u: u.clone() });
    let mut diverged = false;

    for step in 1..=steps {
        match config.mode {
            CouplingMode::ExpertOracle => {
                policy.k().mul_vec_into(&e, &mut u)?;
                u.iter_mut().for_each(|v| *v = -*v);
                u_applied.copy_from_slice(&u);
            }
            CouplingMode::PerStep => {
                u_applied.copy_from_slice(&u);
                denoiser.step(&e, &mut u, dt, &mut rng)?;
            }
            CouplingMode::InnerLoop => {
                denoiser.full(&e, &mut u, inner_dt, &mut rng)?;
                u_applied.copy_from_slice(&u);
            }
        }
        plant.derivative_into(&e, &u_applied, &mut de)?;
        e.iter_mut().zip(&de).for_each(|(e, d)| *e += dt * d);

        let runaway = |v: &[f64]| {
            let n = norm2(v);
            !n.is_finite() || n > bound
        };
        diverged = runaway(&e) || runaway(&u);
        if diverged || step % config.record_stride == 0 || step == steps {
            samples.push(Sample { t: step as f64 * dt, e: e.clone(), u: u.clone() });
        }
        if diverged {
            break;
        }
    }

    Ok(Trajectory { samples, config: config.clone(), diverged })
}

/// Empirical verdict with the default deadband.
pub fn classify_empirical(traj: &Trajectory) -> Result<EmpiricalVerdict> {
    classify_empirical_with(traj, RATE_DEADBAND)
}

pub fn classify_empirical_with(traj: &Trajectory, deadband: f64) -> Result<EmpiricalVerdict> {
    let m = traj.samples[0].u.len();
    let n = traj.samples[0].e.len();
    classify_about(traj, &vec![0.0; n], &vec![0.0; m], deadband)
}

/// Classification of the distance to `(e_star, u_star)` rather than to the
/// origin, for systems whose equilibrium is shifted by drift.
pub fn classify_about(
    traj: &Trajectory,
    e_star: &[f64],
    u_star: &[f64],
    deadband: f64,
) -> Result<EmpiricalVerdict> {
    if traj.diverged {
        return Ok(EmpiricalVerdict { rate: f64::INFINITY, label: Label::Unstable, residual: 0.0 });
    }
    decay_rate_about(traj, e_star, u_star).map(|fit| label_rate(fit, deadband))
}

fn label_rate((rate, residual): (f64, f64), deadband: f64) -> EmpiricalVerdict {
    let label = if rate < -deadband {
        Label::Stable
    } else if rate > deadband {
        Label::Unstable
    } else {
        Label::Marginal
    };
    EmpiricalVerdict { rate, label, residual }
}

/// Least-squares slope of `log‖(e − e*, u − u*)‖` over the trailing half of
/// the samples, with its RMS residual.
///
/// Samples whose deviation norm falls below 1e−300 are skipped; when none
/// survive the deviation has collapsed and the rate is −∞.
pub fn decay_rate_about(traj: &Trajectory, e_star: &[f64], u_star: &[f64]) -> Result<(f64, f64)> {
    let count = traj.samples.len();
    if count < MIN_STEPS as usize {
        return Err(StabError::param(format!(
            "classification needs at least {MIN_STEPS} samples, trajectory has {count}"
        )));
    }
    let points: Vec<(f64, f64)> = traj.samples[count / 2..]
        .iter()
        .filter_map(|s| {
            let dev = s.e.iter().zip(e_star).chain(s.u.iter().zip(u_star)).map(|(a, b)| a - b);
            let norm = norm2_iter(dev);
            (norm >= LOG_FLOOR).then(|| (s.t, norm.ln()))
        })
        .collect();
    if points.len() < 2 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok(least_squares_slope(&points))
}

fn least_squares_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty) = (0.0, 0.0);
    for &(t, y) in points {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
    }
    let slope = sty / stt;
    let rms = (points
        .iter()
        .map(|&(t, y)| (y - mean_y - slope * (t - mean_t)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}

/// Equilibrium `(e*, u*)` of the deterministic coupled system, which is also
/// the fixed point of its Euler discretization. Zero without drift.
pub fn coupled_equilibrium(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    policy.check_plant(plant)?;
    let n = plant.state_dim();
    let m = plant.action_dim();
    let c = match &diffusion.drift {
        Drift::None => return Ok((vec![0.0; n], vec![0.0; m])),
        Drift::Constant(c) => c,
    };
    let system = augmented_matrix(
        plant.a(),
        plant.b(),
        policy.k(),
        &effective_precision(policy, diffusion),
    )?;
    let mut rhs = vec![0.0; n + m];
    for (i, ci) in c.iter().enumerate() {
        rhs[n + i] = -diffusion.alpha * ci;
    }
    let z = system.invert()?.mul_vec(&rhs)?;
    Ok((z[..n].to_vec(), z[n..].to_vec()))
}

/// Equilibrium the given coupling mode settles to. The expert oracle
/// ignores drift; the inner loop applies the denoiser's fixed point
/// `−K·e + Σc/g²`, so its state equilibrium solves `(A − BK)·e = −B·Σc/g²`.
pub fn mode_equilibrium(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
    mode: CouplingMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (plant.state_dim(), plant.action_dim());
    match (mode, &diffusion.drift) {
        (_, Drift::None) | (CouplingMode::ExpertOracle, _) => Ok((vec![0.0; n], vec![0.0; m])),
        (CouplingMode::PerStep, _) => coupled_equilibrium(plant, policy, diffusion),
        (CouplingMode::InnerLoop, _) => {
            policy.check_plant(plant)?;
            let offset = action_fixed_point(policy, diffusion, &vec![0.0; n])?;
            let closed = plant.a().sub(&plant.b().matmul(policy.k())?)?;
            let rhs: Vec<f64> = plant.b().mul_vec(&offset)?.iter().map(|v| -v).collect();
            let e_star = closed.invert()?.mul_vec(&rhs)?;
            let u_star = action_fixed_point(policy, diffusion, &e_star)?;
            Ok((e_star, u_star))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingComparison {
    pub per_step: EmpiricalVerdict,
    pub inner_loop: EmpiricalVerdict,
    /// ‖e_T(per-step) − e_T(inner-loop)‖.
    pub terminal_gap: f64,
    pub per_step_terminal: Sample,
    pub inner_loop_terminal: Sample,
}

/// Runs the per-step and inner-loop couplings with identical seeds.
pub fn full_vs_partial_compare(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
    config: &CouplingConfig,
) -> Result<CouplingComparison> {
    let run = |mode| {
        let cfg = CouplingConfig { mode, ..config.clone() };
        simulate(plant, policy, diffusion, &cfg)
    };
    let partial = run(CouplingMode::PerStep)?;
    let full = run(CouplingMode::InnerLoop)?;
    let gap = partial
        .last()
        .e
        .iter()
        .zip(&full.last().e)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(CouplingComparison {
        per_step: classify_empirical(&partial)?,
        inner_loop: classify_empirical(&full)?,
        terminal_gap: gap,
        per_step_terminal: partial.last().clone(),
        inner_loop_terminal: full.last().clone(),
    })
}

/// Augmented matrix of the deterministic coupled system for a concrete
/// plant/policy/controller triple.
pub fn closed_loop_matrix(
    plant: &PlantModel,
    policy: &ExpertPolicy,
    diffusion: &DiffusionParams,
) -> Result<Matrix> {
    augmented_matrix(plant.a(), plant.b(), policy.k(), &effective_precision(policy, diffusion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn baseline(sigma2: f64) -> (PlantModel, ExpertPolicy, DiffusionParams) {
        (
            PlantModel::scalar(2.0, 1.0).unwrap(),
            ExpertPolicy::scalar(3.0, sigma2.sqrt()).unwrap(),
            DiffusionParams::deterministic(1.0, 1.0),
        )
    }

    #[test]
    fn equilibrium_stays_put_in_every_mode() {
        let (plant, policy, diffusion) = baseline(1.0 / 3.0);
        for mode in [CouplingMode::ExpertOracle, CouplingMode::PerStep, CouplingMode::InnerLoop] {
            let cfg = CouplingConfig::new(mode, 1e-2, 1.0, vec![0.0], vec![0.0]);
            let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
            assert!(traj.samples.iter().all(|s| s.e[0] == 0.0 && s.u[0] == 0.0));
            assert_eq!(classify_empirical(&traj).unwrap().rate, f64::NEG_INFINITY);
            assert_eq!(classify_empirical(&traj).unwrap().label, Label::Stable);
        }
    }

    #[test]
    fn expert_oracle_tracks_closed_form() {
        let (plant, policy, diffusion) = baseline(1.0);
        let cfg = CouplingConfig::new(CouplingMode::ExpertOracle, 1e-3, 5.0, vec![5.0], vec![]);
        let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let worst = traj
            .samples
            .iter()
            .map(|s| (s.e[0] - 5.0 * (-s.t).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 2e-2, "max error {worst}");
        let verdict = classify_empirical(&traj).unwrap();
        assert_eq!(verdict.label, Label::Stable);
        assert!((verdict.rate + 1.0).abs() < 0.05, "rate {}", verdict.rate);
    }

    #[test]
    fn per_step_converges_above_and_diverges_below_the_gain_bound() {
        let (plant, policy, diffusion) = baseline(1.0 / 3.0);
        let mut cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-3, 20.0, vec![5.0], vec![0.0]);
        let ok = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        assert!(norm2(&ok.last().e) < 5e-3 && norm2(&ok.last().u) < 5e-3);

        let (_, weak, _) = baseline(1.0);
        cfg.horizon = 200.0;
        let bad = simulate(&plant, &weak, &diffusion, &cfg).unwrap();
        assert!(bad.diverged);
        assert_eq!(classify_empirical(&bad).unwrap().label, Label::Unstable);
        assert_eq!(classify_empirical(&bad).unwrap().rate, f64::INFINITY);
    }

    #[test]
    fn tiny_amplitudes_still_yield_a_rate() {
        let (plant, policy, diffusion) = baseline(1.0 / 3.0);
        let cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-3, 20.0, vec![1e-200], vec![0.0]);
        let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let scaled = CouplingConfig { e0: vec![1.0], ..cfg.clone() };
        let reference = simulate(&plant, &policy, &diffusion, &scaled).unwrap();
        let (tiny, _) = decay_rate_about(&traj, &[0.0], &[0.0]).unwrap();
        let (unit, _) = decay_rate_about(&reference, &[0.0], &[0.0]).unwrap();
        assert!(tiny.is_finite());
        assert!((tiny - unit).abs() < 1e-9, "{tiny} vs {unit}");
    }

    #[test]
    fn flat_norm_is_marginal() {
        let plant = PlantModel::scalar(0.0, 0.0).unwrap();
        let policy = ExpertPolicy::scalar(0.0, 1.0).unwrap();
        let cfg = CouplingConfig::new(CouplingMode::ExpertOracle, 1e-2, 2.0, vec![3.0], vec![]);
        let traj = simulate(&plant, &policy, &DiffusionParams::default(), &cfg).unwrap();
        let v = classify_empirical(&traj).unwrap();
        assert_eq!(v.label, Label::Marginal);
        assert!(v.rate.abs() < 1e-12);
    }

    #[test]
    fn recording_respects_stride_and_keeps_the_final_sample() {
        let (plant, policy, diffusion) = baseline(0.25);
        let mut cfg = CouplingConfig::new(CouplingMode::PerStep, 0.01, 1.05, vec![1.0], vec![0.0]);
        cfg.record_stride = 10;
        let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert_eq!(ts.len(), 12);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_abs_diff_eq!(*ts.last().unwrap(), 1.05, epsilon = 1e-12);
        assert_eq!(traj.samples[0].t, 0.0);
    }

    #[test]
    fn short_runs_and_bad_shapes_are_rejected() {
        let (plant, policy, diffusion) = baseline(1.0);
        let short = CouplingConfig::new(CouplingMode::PerStep, 0.1, 0.5, vec![1.0], vec![0.0]);
        assert!(simulate(&plant, &policy, &diffusion, &short).is_err());
        let wrong = CouplingConfig::new(CouplingMode::PerStep, 0.01, 1.0, vec![1.0, 2.0], vec![0.0]);
        let err = simulate(&plant, &policy, &diffusion, &wrong).unwrap_err().to_string();
        assert!(err.contains("e0"));
    }

    #[test]
    fn trajectory_csv_layout() {
        let (plant, policy, diffusion) = baseline(1.0);
        let cfg = CouplingConfig::new(CouplingMode::PerStep, 0.1, 1.0, vec![5.0], vec![0.0]);
        let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,e_1,u_1"));
        assert_eq!(lines.next(), Some("0,5,0"));
        assert_eq!(text.lines().count(), 12);
        for (line, sample) in text.lines().skip(1).zip(&traj.samples) {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(fields, vec![sample.t, sample.e[0], sample.u[0]]);
        }
    }

    #[test]
    fn stochastic_runs_are_seed_deterministic() {
        let (plant, policy, _) = baseline(1.0 / 3.0);
        let diffusion = DiffusionParams { stochastic: true, ..DiffusionParams::deterministic(1.0, 1.0) };
        let mut cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-3, 2.0, vec![5.0], vec![0.0]);
        cfg.seed = 99;
        let a = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let b = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 100;
        let c = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn expert_oracle_ignores_diffusion_params() {
        let (plant, policy, _) = baseline(1.0);
        let cfg = CouplingConfig::new(CouplingMode::ExpertOracle, 1e-3, 3.0, vec![2.0], vec![0.5]);
        let a = simulate(&plant, &policy, &DiffusionParams::deterministic(1.0, 1.0), &cfg).unwrap();
        let noisy = DiffusionParams {
            stochastic: true,
            drift: Drift::Constant(vec![4.0]),
            ..DiffusionParams::deterministic(3.0, 0.2)
        };
        let b = simulate(&plant, &policy, &noisy, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coupled_equilibrium_is_a_fixed_point() {
        let (plant, policy, mut diffusion) = baseline(0.3);
        diffusion.alpha = 1.7;
        diffusion.drift = Drift::Constant(vec![0.7]);
        let (e_star, u_star) = coupled_equilibrium(&plant, &policy, &diffusion).unwrap();
        let cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-3, 0.1, e_star.clone(), u_star.clone());
        let traj = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let end = traj.last();
        assert_abs_diff_eq!(end.e[0], e_star[0], epsilon = 1e-12);
        assert_abs_diff_eq!(end.u[0], u_star[0], epsilon = 1e-12);
    }

    #[test]
    fn comparison_examples() {
        let (plant, policy, diffusion) = baseline(1.0 / 3.0);
        let cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-3, 20.0, vec![5.0], vec![0.0]);
        let cmp = full_vs_partial_compare(&plant, &policy, &diffusion, &cfg).unwrap();
        assert_eq!(cmp.per_step.label, Label::Stable);
        assert_eq!(cmp.inner_loop.label, Label::Stable);

        let bad_plant = PlantModel::scalar(2.0, 1.0).unwrap();
        let bad_policy = ExpertPolicy::scalar(1.0, (1.0f64 / 3.0).sqrt()).unwrap();
        let cmp = full_vs_partial_compare(&bad_plant, &bad_policy, &diffusion, &cfg).unwrap();
        assert_eq!(cmp.per_step.label, Label::Unstable);
        assert_eq!(cmp.inner_loop.label, Label::Unstable);
    }

    #[test]
    fn large_gain_per_step_approaches_the_expert() {
        // K' = 100 with σ² = 0.01.
        let (plant, policy, diffusion) = baseline(0.01);
        let mut cfg = CouplingConfig::new(CouplingMode::PerStep, 1e-4, 1.0, vec![5.0], vec![0.0]);
        let partial = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        cfg.mode = CouplingMode::ExpertOracle;
        let expert = simulate(&plant, &policy, &diffusion, &cfg).unwrap();
        let gap = (partial.last().e[0] - expert.last().e[0]).abs();
        assert!(gap < 0.05 * 5.0, "gap {gap}");
    }
}
