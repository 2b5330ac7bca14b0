//! JSON run configuration.
//!
//! Scalar systems may write every matrix and vector as a bare number; the
//! parsed form is kept as written so echoing it reproduces the input.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stab_core::analysis::SweepBase;
use stab_core::diffusion::{DiffusionParams, Drift};
use stab_core::matrixkit::Matrix;
use stab_core::plant::{ExpertPolicy, PlantModel};
use stab_core::sim::{CouplingConfig, CouplingMode};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixValue {
    pub fn to_matrix(&self) -> Result<Matrix, String> {
        match self {
            MatrixValue::Scalar(v) => Matrix::scalar(*v).map_err(|e| e.to_string()),
            MatrixValue::Rows(rows) => Matrix::from_rows(rows.clone()).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorValue {
    Scalar(f64),
    Entries(Vec<f64>),
}

impl VectorValue {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            VectorValue::Scalar(v) => vec![*v],
            VectorValue::Entries(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: MatrixValue,
    #[serde(rename = "B")]
    pub b: MatrixValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<VectorValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(rename = "K")]
    pub k: MatrixValue,
    /// Isotropic standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Full covariance.
    #[serde(rename = "Sigma", default, skip_serializing_if = "Option::is_none")]
    pub sigma_matrix: Option<MatrixValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    #[serde(default = "one")]
    pub g: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<VectorValue>,
    #[serde(default)]
    pub stochastic: bool,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_inner: Option<f64>,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self { g: 1.0, alpha: 1.0, drift: None, stochastic: false, inner_steps: default_inner_steps(), dt_inner: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    #[serde(default = "default_mode")]
    pub mode: CouplingMode,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Initial error `x0 − r`; defaults to starting the state at the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<VectorValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<VectorValue>,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            dt: default_dt(),
            horizon: default_horizon(),
            seed: 0,
            e0: None,
            u0: None,
            record_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Hold `A − BK` fixed by re-deriving K per cell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<f64>,
}

/// Fallback paths used when the matching command-line flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySection>,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub sweep: SweepSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

fn default_inner_steps() -> usize {
    40
}

fn default_mode() -> CouplingMode {
    CouplingMode::PerStep
}

fn default_dt() -> f64 {
    1e-3
}

fn default_horizon() -> f64 {
    20.0
}

fn default_stride() -> usize {
    1
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// Validated core objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct System {
    pub plant: PlantModel,
    pub policy: Option<ExpertPolicy>,
    pub diffusion: DiffusionParams,
    pub coupling: CouplingConfig,
}

impl System {
    pub fn policy(&self) -> Result<&ExpertPolicy, CliError> {
        self.policy
            .as_ref()
            .ok_or_else(|| CliError::Validation("config has no policy section".into()))
    }

    pub fn is_scalar(&self) -> bool {
        self.plant.state_dim() == 1 && self.plant.action_dim() == 1
    }

    /// Scalar parameters for sweeps and the phase plane.
    pub fn scalar_base(&self, closed_loop: Option<f64>) -> Result<SweepBase, CliError> {
        let policy = self.policy()?;
        Ok(SweepBase {
            a: self.plant.a()[(0, 0)],
            b: self.plant.b()[(0, 0)],
            k: policy.k()[(0, 0)],
            sigma: policy.sigma()[(0, 0)].sqrt(),
            g: self.diffusion.g,
            alpha: self.diffusion.alpha,
            closed_loop,
        })
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    /// Applies `STAB_SEED` when set.
    pub fn apply_seed_override(&mut self, value: Option<String>) -> Result<(), CliError> {
        if let Some(raw) = value {
            self.coupling.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("STAB_SEED '{raw}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Checks every precondition and reports all violations together.
    pub fn build(&self) -> Result<System, CliError> {
        let mut problems = Vec::new();
        let mut note = |p: String| problems.push(p);

        let a = self.plant.a.to_matrix().map_err(|e| format!("plant A: {e}"));
        let b = self.plant.b.to_matrix().map_err(|e| format!("plant B: {e}"));
        let (n, m) = match (&a, &b) {
            (Ok(a), Ok(b)) => {
                if !a.is_square() {
                    note(format!("plant A must be square, got {}x{}", a.rows(), a.cols()));
                }
                if b.rows() != a.rows() {
                    note(format!("plant B must have {} rows, got {}", a.rows(), b.rows()));
                }
                (a.rows(), b.cols())
            }
            _ => (0, 0),
        };
        for err in [&a, &b].into_iter().filter_map(|r| r.as_ref().err()) {
            note(err.clone());
        }
        let r = self.plant.r.as_ref().map_or_else(|| vec![0.0; n], VectorValue::to_vec);
        if r.len() != n {
            note(format!("plant r has length {}, state dimension is {n}", r.len()));
        }

        let mut policy_parts = None;
        if let Some(p) = &self.policy {
            let k = p.k.to_matrix().map_err(|e| format!("policy K: {e}"));
            match &k {
                Ok(k) if (k.rows(), k.cols()) != (m, n) => {
                    note(format!("policy K must be {m}x{n}, got {}x{}", k.rows(), k.cols()))
                }
                Err(e) => note(e.clone()),
                _ => {}
            }
            let sigma = match (p.sigma, &p.sigma_matrix) {
                (Some(_), Some(_)) => {
                    note("policy gives both sigma and Sigma; choose one".into());
                    None
                }
                (None, None) => {
                    note("policy needs sigma (standard deviation) or Sigma (covariance)".into());
                    None
                }
                (Some(s), None) => {
                    if !(s > 0.0 && s.is_finite()) {
                        note(format!("policy sigma must be positive, got {s}"));
                        None
                    } else {
                        Some(Matrix::identity(m.max(1)).scale(s * s))
                    }
                }
                (None, Some(cov)) => match cov.to_matrix() {
                    Ok(cov) if (cov.rows(), cov.cols()) != (m, m) => {
                        note(format!("policy Sigma must be {m}x{m}, got {}x{}", cov.rows(), cov.cols()));
                        None
                    }
                    Ok(cov) => Some(cov),
                    Err(e) => {
                        note(format!("policy Sigma: {e}"));
                        None
                    }
                },
            };
            if let (Ok(k), Some(sigma)) = (k, sigma) {
                policy_parts = Some((k, sigma));
            }
        }

        let d = &self.diffusion;
        let drift = match &d.drift {
            None => Drift::None,
            Some(c) => {
                let c = c.to_vec();
                if c.len() != m {
                    note(format!("diffusion drift has length {}, action dimension is {m}", c.len()));
                }
                Drift::Constant(c)
            }
        };
        let diffusion = DiffusionParams {
            g: d.g,
            alpha: d.alpha,
            drift,
            stochastic: d.stochastic,
            inner_steps: d.inner_steps,
            dt_inner: d.dt_inner,
        };
        if let Err(e) = diffusion.validate() {
            note(e.to_string());
        }

        let c = &self.coupling;
        let e0 = c.e0.as_ref().map_or_else(|| r.iter().map(|v| -v).collect(), VectorValue::to_vec);
        let u0 = c.u0.as_ref().map_or_else(Vec::new, VectorValue::to_vec);
        let coupling = CouplingConfig {
            mode: c.mode,
            dt: c.dt,
            horizon: c.horizon,
            record_stride: c.record_stride,
            seed: c.seed,
            e0,
            u0,
        };
        for p in coupling.problems(n, m) {
            note(p);
        }

        if let Some(cl) = self.sweep.closed_loop {
            if !cl.is_finite() {
                note("sweep closed_loop must be finite".into());
            }
        }

        // Core constructors run only once the shapes are known to agree, so
        // their errors are the remaining semantic ones (e.g. an indefinite
        // covariance).
        let mut plant = None;
        let mut policy = None;
        if problems.is_empty() {
            match PlantModel::new(a.clone().unwrap(), b.clone().unwrap(), r) {
                Ok(p) => plant = Some(p),
                Err(e) => problems.push(format!("plant: {e}")),
            }
            if let Some((k, sigma)) = policy_parts {
                match ExpertPolicy::new(k, sigma) {
                    Ok(p) => policy = Some(p),
                    Err(e) => problems.push(format!("policy: {e}")),
                }
            }
        }
        if !problems.is_empty() {
            return Err(CliError::Validation(problems.join("\n")));
        }
        Ok(System { plant: plant.expect("validated"), policy, diffusion, coupling })
    }
}
