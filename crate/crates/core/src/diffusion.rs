//! Score-based denoising controller.
//!
//! The Gaussian expert has the closed-form score `s(u) = −Σ⁻¹(u + K·e)`.
//! One reverse-time step in plant time `dt`, with diffusion time running
//! `α` times faster, is
//!
//! ```text
//! u' = u + [c + g²·s(u)]·α·dt + √α·g·√dt·ξ,   ξ ~ N(0, I)
//! ```
//!
//! so for isotropic Σ = σ²I and no drift the deterministic part is a
//! proportional correction with gain `K' = g²α/σ²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};
use crate::matrixkit::Matrix;
use crate::plant::ExpertPolicy;

/// Drift term of the reverse-time SDE, restricted to forms that only
/// translate the solution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    #[default]
    None,
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionParams {
    pub g: f64,
    pub alpha: f64,
    #[serde(default)]
    pub drift: Drift,
    #[serde(default)]
    pub stochastic: bool,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    /// Step handed to each inner denoising update; `None` selects
    /// [`DiffusionParams::default_inner_dt`].
    #[serde(default)]
    pub dt_inner: Option<f64>,
}

fn default_inner_steps() -> usize {
    40
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            g: 1.0,
            alpha: 1.0,
            drift: Drift::None,
            stochastic: false,
            inner_steps: default_inner_steps(),
            dt_inner: None,
        }
    }
}

impl DiffusionParams {
    pub fn deterministic(g: f64, alpha: f64) -> Self {
        Self { g, alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.g > 0.0 && self.g.is_finite()) {
            problems.push(format!("g must be positive, got {}", self.g));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            problems.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.inner_steps == 0 {
            problems.push("inner_steps must be at least 1".to_string());
        }
        if let Some(dt) = self.dt_inner {
            if !(dt > 0.0 && dt.is_finite()) {
                problems.push(format!("dt_inner must be positive, got {dt}"));
            }
        }
        if let Drift::Constant(c) = &self.drift {
            if c.iter().any(|v| !v.is_finite()) {
                problems.push("drift entries must be finite".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(StabError::param(problems.join("; ")))
        }
    }

    /// `g²·α`, the factor multiplying Σ⁻¹ in the deterministic update.
    pub fn gain_scale(&self) -> f64 {
        self.g * self.g * self.alpha
    }

    /// Scalar effective gain `K' = g²α/σ²`.
    pub fn kprime(&self, sigma: f64) -> f64 {
        self.gain_scale() / (sigma * sigma)
    }

    /// Inner step equal to half the explicit-Euler stiffness limit of the
    /// frozen-state recursion, so the inner loop contracts by at least a
    /// factor two along the stiffest action direction per step.
    pub fn default_inner_dt(&self, policy: &ExpertPolicy) -> Result<f64> {
        let stiffest = policy.precision().eig_sym()?.last().copied().unwrap_or(1.0);
        Ok(0.5 / (self.gain_scale() * stiffest))
    }

    pub fn inner_dt(&self, policy: &ExpertPolicy) -> Result<f64> {
        match self.dt_inner {
            Some(dt) => Ok(dt),
            None => self.default_inner_dt(policy),
        }
    }

    fn drift_vec(&self, m: usize) -> Result<Option<&[f64]>> {
        match &self.drift {
            Drift::None => Ok(None),
            Drift::Constant(c) if c.len() == m => Ok(Some(c)),
            Drift::Constant(c) => Err(StabError::dim(format!(
                "drift has length {} but the action has dimension {m}",
                c.len()
            ))),
        }
    }
}

/// Seeded Gaussian stream backing the Brownian increments; one per
/// trajectory.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }
}

/// `−Σ⁻¹(u + K·e)`.
pub fn score(policy: &ExpertPolicy, e: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let residual = feedback_residual(policy, e, u)?;
    let mut s = policy.precision().mul_vec(&residual)?;
    s.iter_mut().for_each(|v| *v = -*v);
    Ok(s)
}

fn feedback_residual(policy: &ExpertPolicy, e: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != policy.action_dim() {
        return Err(StabError::dim(format!(
            "action has length {}, policy expects {}",
            u.len(),
            policy.action_dim()
        )));
    }
    let mut r = policy.k().mul_vec(e)?;
    r.iter_mut().zip(u).for_each(|(r, u)| *r += u);
    Ok(r)
}

/// One time-rescaled reverse-time step of length `dt` in plant time.
pub fn denoise_step(
    policy: &ExpertPolicy,
    params: &DiffusionParams,
    e: &[f64],
    u: &[f64],
    dt: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut scratch = Denoiser::new(policy, params)?;
    let mut out = u.to_vec();
    scratch.step(e, &mut out, dt, rng)?;
    Ok(out)
}

/// Full inner-loop denoising at a frozen state: start from N(0, I) (or zero
/// when deterministic) and apply `inner_steps` updates of size `dt_inner`.
pub fn full_denoise(
    policy: &ExpertPolicy,
    params: &DiffusionParams,
    e: &[f64],
    dt_inner: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut denoiser = Denoiser::new(policy, params)?;
    let mut u = vec![0.0; policy.action_dim()];
    denoiser.full(e, &mut u, dt_inner, rng)?;
    Ok(u)
}

/// Deterministic fixed point of the frozen-state update:
/// `u* = −K·e + Σ·c/g²` (α cancels between drift and score).
pub fn action_fixed_point(
    policy: &ExpertPolicy,
    params: &DiffusionParams,
    e: &[f64],
) -> Result<Vec<f64>> {
    let mut u = policy.expert_action(e)?;
    if let Some(c) = params.drift_vec(policy.action_dim())? {
        let shift = policy.sigma().mul_vec(c)?;
        let g2 = params.g * params.g;
        u.iter_mut().zip(shift).for_each(|(u, s)| *u += s / g2);
    }
    Ok(u)
}

/// Preallocated workspace for repeated denoising updates.
pub(crate) struct Denoiser<'a> {
    policy: &'a ExpertPolicy,
    params: &'a DiffusionParams,
    drift: Option<&'a [f64]>,
    residual: Vec<f64>,
    score: Vec<f64>,
}

impl<'a> Denoiser<'a> {
    pub(crate) fn new(policy: &'a ExpertPolicy, params: &'a DiffusionParams) -> Result<Self> {
        params.validate()?;
        let m = policy.action_dim();
        Ok(Self {
            policy,
            params,
            drift: params.drift_vec(m)?,
            residual: vec![0.0; m],
            score: vec![0.0; m],
        })
    }

    pub(crate) fn step(
        &mut self,
        e: &[f64],
        u: &mut [f64],
        dt: f64,
        rng: &mut RngStream,
    ) -> Result<()> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(StabError::param(format!("dt must be positive, got {dt}")));
        }
        if u.len() != self.residual.len() {
            return Err(StabError::dim(format!(
                "action has length {}, policy expects {}",
                u.len(),
                self.residual.len()
            )));
        }
        self.policy.k().mul_vec_into(e, &mut self.residual)?;
        self.residual.iter_mut().zip(u.iter()).for_each(|(r, u)| *r += u);
        self.policy.precision().mul_vec_into(&self.residual, &mut self.score)?;

        let g2 = self.params.g * self.params.g;
        let alpha = self.params.alpha;
        for i in 0..u.len() {
            let c = self.drift.map_or(0.0, |c| c[i]);
            u[i] += (c - g2 * self.score[i]) * alpha * dt;
        }
        if self.params.stochastic {
            let noise_scale = alpha.sqrt() * self.params.g * dt.sqrt();
            for v in u.iter_mut() {
                *v += noise_scale * rng.standard_normal();
            }
        }
        Ok(())
    }

    pub(crate) fn full(
        &mut self,
        e: &[f64],
        u: &mut [f64],
        dt_inner: f64,
        rng: &mut RngStream,
    ) -> Result<()> {
        if self.params.stochastic {
            rng.fill_standard_normal(u);
        } else {
            u.fill(0.0);
        }
        for _ in 0..self.params.inner_steps {
            self.step(e, u, dt_inner, rng)?;
        }
        Ok(())
    }
}

/// Effective precision `g²α·Σ⁻¹` used by the matrix-valued stability tests.
pub fn effective_precision(policy: &ExpertPolicy, params: &DiffusionParams) -> Matrix {
    policy.precision().scale(params.gain_scale())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn baseline_policy(sigma2: f64) -> ExpertPolicy {
        ExpertPolicy::scalar(3.0, sigma2.sqrt()).unwrap()
    }

    #[test]
    fn score_examples() {
        let pol = baseline_policy(1.0);
        assert_eq!(score(&pol, &[5.0], &[-15.0]).unwrap(), vec![0.0]);
        assert_eq!(score(&pol, &[5.0], &[0.0]).unwrap(), vec![-15.0]);
        let flat = ExpertPolicy::scalar(0.0, 0.5).unwrap();
        assert_eq!(score(&flat, &[123.0], &[2.0]).unwrap(), vec![-8.0]);
    }

    #[test]
    fn score_vanishes_at_expert_action_nd() {
        let k = Matrix::from_rows(vec![vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let sigma = Matrix::from_rows(vec![vec![0.3, 0.1], vec![0.1, 0.2]]).unwrap();
        let pol = ExpertPolicy::new(k, sigma).unwrap();
        let e = [0.7, -1.1];
        let u = pol.expert_action(&e).unwrap();
        assert!(score(&pol, &e, &u).unwrap().iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn denoise_step_examples() {
        let pol = baseline_policy(1.0);
        let params = DiffusionParams::deterministic(1.0, 1.0);
        let mut rng = RngStream::new(0);
        let fixed = denoise_step(&pol, &params, &[5.0], &[-15.0], 0.01, &mut rng).unwrap();
        assert_eq!(fixed, vec![-15.0]);
        let next = denoise_step(&pol, &params, &[5.0], &[0.0], 0.01, &mut rng).unwrap();
        assert_abs_diff_eq!(next[0], -0.15, epsilon = 1e-15);
        assert!(denoise_step(&pol, &params, &[5.0], &[0.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn stochastic_increment_variance_matches_alpha_g2_dt() {
        let pol = ExpertPolicy::scalar(0.0, 1.0).unwrap();
        let params = DiffusionParams { g: 1.3, alpha: 2.0, stochastic: true, ..Default::default() };
        let dt = 0.01;
        let mut rng = RngStream::new(11);
        let mut denoiser = Denoiser::new(&pol, &params).unwrap();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let mut u = [0.0];
                denoiser.step(&[0.0], &mut u, dt, &mut rng).unwrap();
                u[0]
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = params.alpha * params.g * params.g * dt;
        // Standard error of a sample variance is σ²·√(2/(n−1)).
        let se = expected * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - expected).abs() < 3.0 * se, "var {var} vs {expected}");
    }

    #[test]
    fn full_denoise_examples() {
        // K' = 3 with σ² = 1/3, g = α = 1.
        let pol = baseline_policy(1.0 / 3.0);
        let params =
            DiffusionParams { inner_steps: 500, ..DiffusionParams::deterministic(1.0, 1.0) };
        let mut rng = RngStream::new(1);
        let u = full_denoise(&pol, &params, &[5.0], 0.01, &mut rng).unwrap();
        assert!((u[0] + 15.0).abs() < 1e-3);
        // Geometric-series oracle: u_n = −15·(1 − 0.97ⁿ).
        let oracle = -15.0 * (1.0 - 0.97f64.powi(500));
        assert_abs_diff_eq!(u[0], oracle, epsilon = 1e-10);

        let zero = full_denoise(&pol, &params, &[0.0], 0.01, &mut rng).unwrap();
        assert_eq!(zero, vec![0.0]);
    }

    #[test]
    fn single_inner_step_is_one_denoise_step_from_the_init() {
        let pol = baseline_policy(0.5);
        let params = DiffusionParams {
            inner_steps: 1,
            stochastic: true,
            ..DiffusionParams::deterministic(0.8, 2.0)
        };
        let mut a = RngStream::new(77);
        let full = full_denoise(&pol, &params, &[1.5], 0.02, &mut a).unwrap();
        let mut b = RngStream::new(77);
        let init = [b.standard_normal()];
        let manual = denoise_step(&pol, &params, &[1.5], &init, 0.02, &mut b).unwrap();
        assert_eq!(full, manual);
    }

    #[test]
    fn default_inner_dt_halves_the_stiffness_limit() {
        let pol = baseline_policy(0.25);
        let params = DiffusionParams::deterministic(2.0, 0.5);
        // g²α/σ² = 4·0.5/0.25 = 8.
        assert_abs_diff_eq!(params.default_inner_dt(&pol).unwrap(), 0.5 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn drift_moves_the_fixed_point_only() {
        let pol = baseline_policy(0.5);
        let c = 0.7;
        for alpha in [1.0, 2.5] {
            let params = DiffusionParams {
                drift: Drift::Constant(vec![c]),
                ..DiffusionParams::deterministic(1.2, alpha)
            };
            let star = action_fixed_point(&pol, &params, &[2.0]).unwrap();
            assert_abs_diff_eq!(star[0], -6.0 + 0.5 * c / 1.44, epsilon = 1e-12);
            let mut rng = RngStream::new(0);
            let next = denoise_step(&pol, &params, &[2.0], &star, 0.01, &mut rng).unwrap();
            assert_abs_diff_eq!(next[0], star[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn params_validation_lists_every_problem() {
        let bad = DiffusionParams { g: 0.0, alpha: -1.0, inner_steps: 0, ..Default::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("g must be positive"));
        assert!(msg.contains("alpha"));
        assert!(msg.contains("inner_steps"));
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..1000 {
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    proptest! {
        #[test]
        fn score_doubles_with_its_arguments(
            k in -5.0f64..5.0, s in 0.1f64..3.0, e in -4.0f64..4.0, u in -4.0f64..4.0,
        ) {
            let pol = ExpertPolicy::scalar(k, s).unwrap();
            let one = score(&pol, &[e], &[u]).unwrap()[0];
            let two = score(&pol, &[2.0 * e], &[2.0 * u]).unwrap()[0];
            prop_assert_eq!(two, 2.0 * one);
        }

        #[test]
        fn deterministic_step_is_proportional_correction(
            k in -5.0f64..5.0, sigma in 0.1f64..3.0, g in 0.1f64..3.0, alpha in 0.1f64..5.0,
            e in -4.0f64..4.0, u in -4.0f64..4.0, dt in 1e-4f64..0.05,
        ) {
            let pol = ExpertPolicy::scalar(k, sigma).unwrap();
            let params = DiffusionParams::deterministic(g, alpha);
            let mut rng = RngStream::new(0);
            let next = denoise_step(&pol, &params, &[e], &[u], dt, &mut rng).unwrap()[0];
            let kprime = g * g * alpha / (sigma * sigma);
            let expected = u - kprime * (u + k * e) * dt;
            prop_assert!((next - expected).abs() <= 1e-12 * (1.0 + expected.abs() + u.abs()));
        }
    }
}
