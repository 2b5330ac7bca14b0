//! LTI plant and the linear-feedback expert it is demonstrated with.
//!
//! All dynamics run in error coordinates `e = x − r`: the plant obeys
//! `ė = A·e + B·u` and the expert applies `u = −K·e`, so the setpoint is an
//! equilibrium by construction. Callers translate back with `x = e + r`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};
use crate::matrixkit::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    a: Matrix,
    b: Matrix,
    setpoint: Vec<f64>,
}

impl PlantModel {
    pub fn new(a: Matrix, b: Matrix, setpoint: Vec<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(StabError::dim(format!("A must be square, got {}×{}", a.rows(), a.cols())));
        }
        if b.rows() != a.rows() {
            return Err(StabError::dim(format!(
                "B has {} rows but the state has dimension {}",
                b.rows(),
                a.rows()
            )));
        }
        if setpoint.len() != a.rows() {
            return Err(StabError::dim(format!(
                "setpoint has length {} but the state has dimension {}",
                setpoint.len(),
                a.rows()
            )));
        }
        if setpoint.iter().any(|v| !v.is_finite()) {
            return Err(StabError::NonFinite("setpoint".into()));
        }
        Ok(Self { a, b, setpoint })
    }

    /// Scalar plant `ė = a·e + b·u` regulated to the origin.
    pub fn scalar(a: f64, b: f64) -> Result<Self> {
        Self::new(Matrix::scalar(a)?, Matrix::scalar(b)?, vec![0.0])
    }

    pub fn with_setpoint(mut self, setpoint: Vec<f64>) -> Result<Self> {
        if setpoint.len() != self.state_dim() {
            return Err(StabError::dim("setpoint length differs from state dimension"));
        }
        self.setpoint = setpoint;
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn setpoint(&self) -> &[f64] {
        &self.setpoint
    }

    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.cols()
    }

    /// `A·e + B·u`.
    pub fn derivative(&self, e: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.derivative_into(e, u, &mut out)?;
        Ok(out)
    }

    pub(crate) fn derivative_into(&self, e: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if u.len() != self.action_dim() {
            return Err(StabError::dim(format!(
                "action has length {}, plant expects {}",
                u.len(),
                self.action_dim()
            )));
        }
        self.a.mul_vec_into(e, out)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.b.row(i).iter().zip(u).map(|(b, u)| b * u).sum::<f64>();
        }
        Ok(())
    }

    pub fn to_error(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.setpoint).map(|(x, r)| x - r).collect()
    }

    pub fn to_state(&self, e: &[f64]) -> Vec<f64> {
        e.iter().zip(&self.setpoint).map(|(e, r)| e + r).collect()
    }
}

/// Gaussian expert centred on `u = −K·e` with demonstration covariance Σ.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertPolicy {
    k: Matrix,
    sigma: Matrix,
    precision: Matrix,
}

impl ExpertPolicy {
    pub fn new(k: Matrix, sigma: Matrix) -> Result<Self> {
        if !sigma.is_square() || sigma.rows() != k.rows() {
            return Err(StabError::dim(format!(
                "covariance must be {0}×{0} to match a gain with {0} rows",
                k.rows()
            )));
        }
        if !sigma.is_positive_definite()? {
            return Err(StabError::param("demonstration covariance must be positive definite"));
        }
        let sigma = sigma.symmetric_part()?;
        let precision = sigma.invert()?.symmetric_part()?;
        Ok(Self { k, sigma, precision })
    }

    /// Isotropic covariance `σ²·I` from a standard deviation.
    pub fn isotropic(k: Matrix, sigma: f64) -> Result<Self> {
        if sigma.is_nan() || sigma <= 0.0 || !sigma.is_finite() {
            return Err(StabError::param(format!("sigma must be positive, got {sigma}")));
        }
        let m = k.rows();
        Self::new(k, Matrix::identity(m).scale(sigma * sigma))
    }

    pub fn scalar(k: f64, sigma: f64) -> Result<Self> {
        Self::isotropic(Matrix::scalar(k)?, sigma)
    }

    pub fn k(&self) -> &Matrix {
        &self.k
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// Σ⁻¹.
    pub fn precision(&self) -> &Matrix {
        &self.precision
    }

    pub fn action_dim(&self) -> usize {
        self.k.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.k.cols()
    }

    /// Deterministic expert action `−K·e`.
    pub fn expert_action(&self, e: &[f64]) -> Result<Vec<f64>> {
        let mut u = self.k.mul_vec(e)?;
        u.iter_mut().for_each(|v| *v = -*v);
        Ok(u)
    }

    pub fn check_plant(&self, plant: &PlantModel) -> Result<()> {
        if self.state_dim() != plant.state_dim() || self.action_dim() != plant.action_dim() {
            return Err(StabError::dim(format!(
                "gain is {}×{} but the plant needs {}×{}",
                self.k.rows(),
                self.k.cols(),
                plant.action_dim(),
                plant.state_dim()
            )));
        }
        Ok(())
    }
}
