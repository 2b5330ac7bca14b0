//! Demonstration-set quality check.
//!
//! A demonstration log is reduced to a best-fit linear gain `K̂` and the
//! covariance `Σ̂` of the feedback residuals `u + K̂·e`; those feed the
//! analytic verdicts, so the spread of the demonstrations becomes a
//! pass/fail stability metric for the dataset.

use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::analysis::{analytic_1d, analytic_ndim, StabilityVerdict};
use crate::diffusion::RngStream;
use crate::error::{Result, StabError};
use crate::io::fmt_f64;
use crate::matrixkit::Matrix;
use crate::plant::PlantModel;

/// Ridge added to Σ̂ so deterministic datasets still yield an SPD covariance.
pub const COV_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub e: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    state_dim: usize,
    action_dim: usize,
    records: Vec<Record>,
}

impl DemonstrationSet {
    pub fn new(state_dim: usize, action_dim: usize, records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(StabError::EmptyDataset);
        }
        for (i, r) in records.iter().enumerate() {
            if r.e.len() != state_dim || r.u.len() != action_dim {
                return Err(StabError::dim(format!("record {i} has the wrong arity")));
            }
            if r.e.iter().chain(&r.u).any(|v| !v.is_finite()) {
                return Err(StabError::NonFinite(format!("record {i}")));
            }
        }
        Ok(Self { state_dim, action_dim, records })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV in the same layout [`load_demonstrations`] reads.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.state_dim)
            .map(|i| format!("e_{i}"))
            .chain((1..=self.action_dim).map(|i| format!("u_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let row: Vec<String> = r.e.iter().chain(&r.u).map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = |msg: String| StabError::Parse { line: 1, message: msg };
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    let mut n = 0;
    let mut m = 0;
    for (idx, c) in cols.iter().enumerate() {
        let expected_e = format!("e_{}", n + 1);
        let expected_u = format!("u_{}", m + 1);
        if m == 0 && *c == expected_e {
            n += 1;
        } else if n > 0 && *c == expected_u {
            m += 1;
        } else {
            return Err(bad(format!("unexpected column '{c}' at position {}", idx + 1)));
        }
    }
    if n == 0 || m == 0 {
        return Err(bad("header must list e_1..e_N followed by u_1..u_M".into()));
    }
    Ok((n, m))
}

/// Parses `e_1..e_N,u_1..u_M` CSV. Blank lines are ignored.
pub fn load_demonstrations<R: BufRead>(reader: R) -> Result<DemonstrationSet> {
    let mut lines = reader.lines().enumerate();
    let (n, m) = loop {
        match lines.next() {
            None => return Err(StabError::Parse { line: 1, message: "missing header".into() }),
            Some((i, line)) => {
                let line = line.map_err(|e| StabError::Parse { line: i + 1, message: e.to_string() })?;
                if line.trim().is_empty() {
                    continue;
                }
                break parse_header(line.trim())?;
            }
        }
    };

    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| StabError::Parse { line: lineno, message: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + m {
            return Err(StabError::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", n + m, fields.len()),
            });
        }
        let mut values = Vec::with_capacity(n + m);
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| StabError::Parse {
                line: lineno,
                message: format!("'{}' is not a number", f.trim()),
            })?;
            if !v.is_finite() {
                return Err(StabError::Parse { line: lineno, message: "non-finite value".into() });
            }
            values.push(v);
        }
        let u = values.split_off(n);
        records.push(Record { e: values, u });
    }
    DemonstrationSet::new(n, m, records)
}

/// Least-squares gain minimizing `Σ‖u_i + K·e_i‖²`:
/// `K̂ = −(Σ u eᵀ)(Σ e eᵀ)⁻¹`.
pub fn estimate_gain(demos: &DemonstrationSet) -> Result<Matrix> {
    let (n, m) = (demos.state_dim, demos.action_dim);
    let needed = n * m + 2;
    if demos.len() < needed {
        return Err(StabError::RankDeficient(format!(
            "{} records cannot determine a {m}×{n} gain (need at least {needed})",
            demos.len()
        )));
    }
    let mut ee = vec![0.0; n * n];
    let mut ue = vec![0.0; m * n];
    for r in &demos.records {
        for i in 0..n {
            for j in 0..n {
                ee[i * n + j] += r.e[i] * r.e[j];
            }
        }
        for i in 0..m {
            for j in 0..n {
                ue[i * n + j] += r.u[i] * r.e[j];
            }
        }
    }
    let ee = Matrix::from_row_major(n, n, ee)?;
    let ue = Matrix::from_row_major(m, n, ue)?;
    let inv = ee.invert().map_err(|e| StabError::RankDeficient(format!("state moment matrix: {e}")))?;
    Ok(ue.matmul(&inv)?.scale(-1.0))
}

/// Sample covariance (1/(n−1)) of `u + K̂·e`, plus `COV_FLOOR·I`.
pub fn estimate_covariance(demos: &DemonstrationSet, k_hat: &Matrix) -> Result<Matrix> {
    estimate_covariance_with_floor(demos, k_hat, COV_FLOOR)
}

pub fn estimate_covariance_with_floor(
    demos: &DemonstrationSet,
    k_hat: &Matrix,
    floor: f64,
) -> Result<Matrix> {
    let count = demos.len();
    if count < 2 {
        return Err(StabError::param("covariance needs at least 2 records"));
    }
    let m = demos.action_dim;
    let residuals: Vec<Vec<f64>> = demos
        .records
        .iter()
        .map(|r| {
            let mut res = k_hat.mul_vec(&r.e)?;
            res.iter_mut().zip(&r.u).for_each(|(x, u)| *x += u);
            Ok(res)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; m];
    for r in &residuals {
        mean.iter_mut().zip(r).for_each(|(acc, v)| *acc += v);
    }
    mean.iter_mut().for_each(|v| *v /= count as f64);
    let mut cov = vec![0.0; m * m];
    for r in &residuals {
        for i in 0..m {
            for j in 0..m {
                cov[i * m + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = (count - 1) as f64;
    cov.iter_mut().for_each(|v| *v /= denom);
    for i in 0..m {
        cov[i * m + i] += floor;
    }
    Matrix::from_row_major(m, m, cov)?.symmetric_part()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub k_hat: Matrix,
    pub sigma_hat: Matrix,
    pub verdict: StabilityVerdict,
    /// Largest admissible isotropic spread `g·√α / √λ_max(sym(A))`; `None`
    /// when the plant's symmetric part has no positive eigenvalue.
    pub sigma_threshold: Option<f64>,
    /// Minimum slack across the verdict's margins.
    pub margin: f64,
}

/// Gain and covariance estimation followed by the analytic verdict.
pub fn quality_report(plant: &PlantModel, demos: &DemonstrationSet, g: f64, alpha: f64) -> Result<QualityReport> {
    if plant.state_dim() != demos.state_dim || plant.action_dim() != demos.action_dim {
        return Err(StabError::dim(format!(
            "plant is {}-state/{}-action but the demonstrations are {}/{}",
            plant.state_dim(),
            plant.action_dim(),
            demos.state_dim,
            demos.action_dim
        )));
    }
    let k_hat = estimate_gain(demos)?;
    let sigma_hat = estimate_covariance(demos, &k_hat)?;

    let s1_max = *plant.a().symmetric_part()?.eig_sym()?.last().expect("non-empty");
    let sigma_threshold = (s1_max > 0.0).then(|| g * (alpha / s1_max).sqrt());

    let verdict = if plant.state_dim() == 1 && plant.action_dim() == 1 {
        analytic_1d(
            plant.a()[(0, 0)],
            plant.b()[(0, 0)],
            k_hat[(0, 0)],
            sigma_hat[(0, 0)].sqrt(),
            g,
            alpha,
        )?
    } else {
        analytic_ndim(plant.a(), plant.b(), &k_hat, &sigma_hat, g, alpha)?
    };
    let margin = verdict.margin_min();
    Ok(QualityReport { k_hat, sigma_hat, verdict, sigma_threshold, margin })
}

/// Synthetic demonstrations `u = −K·e + η` with `e ~ N(0, state_std²·I)` and
/// `η ~ N(0, Σ)`; a fixture with known ground truth.
pub fn synthesize_demonstrations(
    k: &Matrix,
    sigma: &Matrix,
    state_std: f64,
    count: usize,
    seed: u64,
) -> Result<DemonstrationSet> {
    let (m, n) = (k.rows(), k.cols());
    let chol = sigma
        .cholesky()?
        .ok_or_else(|| StabError::param("noise covariance must be positive definite"))?;
    if chol.rows() != m {
        return Err(StabError::dim("noise covariance must match the action dimension"));
    }
    let mut rng = RngStream::new(seed);
    let mut records = Vec::with_capacity(count);
    let mut xi = vec![0.0; m];
    for _ in 0..count {
        let e: Vec<f64> = (0..n).map(|_| state_std * rng.standard_normal()).collect();
        let mut u = k.mul_vec(&e)?;
        rng.fill_standard_normal(&mut xi);
        let eta = chol.mul_vec(&xi)?;
        u.iter_mut().zip(eta).for_each(|(u, n)| *u = -*u + n);
        records.push(Record { e, u });
    }
    DemonstrationSet::new(n, m, records)
}
