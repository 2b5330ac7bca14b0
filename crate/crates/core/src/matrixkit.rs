//! Small dense linear algebra.
//!
//! Everything here targets the handful of matrices a stability check needs
//! (state maps, gains, covariances and their symmetric parts), so sizes are
//! expected to stay around N ≤ 16. Symmetric eigenvalues use cyclic Jacobi
//! rotations; general nonsymmetric spectra are deliberately absent apart
//! from the closed-form 2×2 case.

use std::fmt;
use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StabError};

/// Relative asymmetry below which a matrix is silently symmetrized.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative pivot threshold for inversion.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Relative Cholesky pivot threshold for positive-definiteness tests.
pub const PD_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense row-major real matrix with finite entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(StabError::dim(format!("empty matrix {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(StabError::dim(format!(
                "{} entries supplied for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StabError::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(StabError::dim("ragged matrix rows"));
        }
        Self::from_row_major(r, c, rows.into_iter().flatten().collect())
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::from_row_major(1, 1, vec![value])
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::from_row_major(n, n, data)
    }

    /// Assembles `[[tl, tr], [bl, br]]` from conforming blocks.
    pub fn block(tl: &Matrix, tr: &Matrix, bl: &Matrix, br: &Matrix) -> Result<Self> {
        if tl.rows != tr.rows || bl.rows != br.rows || tl.cols != bl.cols || tr.cols != br.cols {
            return Err(StabError::dim("non-conforming blocks"));
        }
        let rows = tl.rows + bl.rows;
        let cols = tl.cols + tr.cols;
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = match (i < tl.rows, j < tl.cols) {
                    (true, true) => tl[(i, j)],
                    (true, false) => tr[(i, j - tl.cols)],
                    (false, true) => bl[(i - tl.rows, j)],
                    (false, false) => br[(i - tl.rows, j - tl.cols)],
                };
                out.data[i * cols + j] = v;
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(StabError::dim(format!(
                "cannot multiply {}×{} by {}×{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = self · v` without allocating.
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.cols || out.len() != self.rows {
            return Err(StabError::dim(format!(
                "{}×{} matrix applied to vector of length {} (output {})",
                self.rows,
                self.cols,
                v.len(),
                out.len()
            )));
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    fn zip_with(&self, rhs: &Matrix, op: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(StabError::dim(format!(
                "shape {}×{} vs {}×{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| op(*a, *b)).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn add(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Matrix) -> Result<Matrix> {
        self.zip_with(rhs, |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    fn require_square(&self, what: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(StabError::dim(format!(
                "{what} requires a square matrix, got {}×{}",
                self.rows, self.cols
            )))
        }
    }

    /// Largest |M_ij − M_ji| relative to the largest entry.
    pub fn relative_asymmetry(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 || !self.is_square() {
            return 0.0;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    /// `(M + Mᵀ)/2`, averaged once per pair and mirrored so the result is
    /// bit-for-bit symmetric.
    pub fn symmetric_part(&self) -> Result<Matrix> {
        self.require_square("symmetric_part")?;
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        Ok(out)
    }

    fn checked_symmetric(&self) -> Result<Matrix> {
        self.require_square("symmetric operation")?;
        let asym = self.relative_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(StabError::NotSymmetric(asym));
        }
        self.symmetric_part()
    }

    /// Real eigenvalues of a symmetric matrix, ascending.
    pub fn eig_sym(&self) -> Result<Vec<f64>> {
        Ok(self.eig_sym_vectors()?.0)
    }

    /// Eigenvalues (ascending) and the matching orthonormal eigenvectors as
    /// matrix columns.
    pub fn eig_sym_vectors(&self) -> Result<(Vec<f64>, Matrix)> {
        let mut a = self.checked_symmetric()?;
        let n = a.rows;
        let mut v = Matrix::identity(n);
        let total = a.frobenius();

        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum::<f64>()
                .sqrt();
            if off <= f64::EPSILON * 1e-2 * total || off == 0.0 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    jacobi_rotate(&mut a, p, q, c, s);
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v.data[k * n + p] = c * vkp - s * vkq;
                        v.data[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        let diag = a.diagonal();
        order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let values = order.iter().map(|&i| diag[i]).collect();
        let mut vectors = Matrix::zeros(n, n);
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..n {
                vectors.data[k * n + new_col] = v[(k, old_col)];
            }
        }
        Ok((values, vectors))
    }

    /// Cholesky-based positive-definiteness test; pivots must exceed
    /// `PD_TOL` times the largest diagonal magnitude.
    pub fn is_positive_definite(&self) -> Result<bool> {
        Ok(self.cholesky()?.is_some())
    }

    /// Lower-triangular `L` with `L·Lᵀ = S`, or `None` when `S` is not
    /// positive definite under the `PD_TOL` pivot rule.
    pub fn cholesky(&self) -> Result<Option<Matrix>> {
        let s = self.checked_symmetric()?;
        let n = s.rows;
        let threshold = PD_TOL * s.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let pivot = s[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
            if pivot.is_nan() || pivot <= threshold {
                return Ok(None);
            }
            let root = pivot.sqrt();
            l.data[j * n + j] = root;
            for i in (j + 1)..n {
                let dot: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
                l.data[i * n + j] = (s[(i, j)] - dot) / root;
            }
        }
        Ok(Some(l))
    }

    /// Gauss–Jordan inversion with partial pivoting.
    pub fn invert(&self) -> Result<Matrix> {
        self.require_square("invert")?;
        let n = self.rows;
        let threshold = SINGULAR_TOL * self.max_abs();
        let mut a = self.data.clone();
        let mut inv = Matrix::identity(n).data;

        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs <= threshold || pivot_abs == 0.0 {
                return Err(StabError::Singular { pivot: pivot_abs, threshold });
            }
            if pivot_row != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot_row * n + k);
                    inv.swap(col * n + k, pivot_row * n + k);
                }
            }
            let p = a[col * n + col];
            for k in 0..n {
                a[col * n + k] /= p;
                inv[col * n + k] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..n {
                    a[r * n + k] -= f * a[col * n + k];
                    inv[r * n + k] -= f * inv[col * n + k];
                }
            }
        }
        Matrix::from_row_major(n, n, inv)
    }

    /// Both eigenvalues of a 2×2 matrix, real parts descending.
    pub fn eig_2x2(&self) -> Result<[Complex64; 2]> {
        if self.rows != 2 || self.cols != 2 {
            return Err(StabError::dim(format!(
                "eig_2x2 requires a 2×2 matrix, got {}×{}",
                self.rows, self.cols
            )));
        }
        Ok(quadratic_roots(self.trace(), self[(0, 0)] * self[(1, 1)] - self[(0, 1)] * self[(1, 0)]))
    }
}

/// Roots of `λ² − trace·λ + det`, real parts descending.
pub fn quadratic_roots(trace: f64, det: f64) -> [Complex64; 2] {
    let half = 0.5 * trace;
    let disc = half * half - det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        // Avoid cancellation: take the larger-magnitude root first, recover
        // the other from the product.
        let big = if half >= 0.0 { half + root } else { half - root };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (hi, lo) = if big >= small { (big, small) } else { (small, big) };
        [Complex64::new(hi, 0.0), Complex64::new(lo, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(half, im), Complex64::new(half, -im)]
    }
}

fn jacobi_rotate(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows;
    for k in 0..n {
        let akp = a.data[k * n + p];
        let akq = a.data[k * n + q];
        a.data[k * n + p] = c * akp - s * akq;
        a.data[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a.data[p * n + k];
        let aqk = a.data[q * n + k];
        a.data[p * n + k] = c * apk - s * aqk;
        a.data[q * n + k] = s * apk + c * aqk;
    }
    a.data[p * n + q] = 0.0;
    a.data[q * n + p] = 0.0;
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index ({i}, {j}) out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.cols)).finish()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = StabError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Euclidean norm, scaled by the largest entry so neither tiny nor huge
/// components underflow or overflow when squared.
pub fn norm2(v: &[f64]) -> f64 {
    norm2_iter(v.iter().copied())
}

pub(crate) fn norm2_iter(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = v.clone().fold(0.0, |m: f64, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * v.map(|x| (x / scale).powi(2)).sum::<f64>().sqrt()
}
