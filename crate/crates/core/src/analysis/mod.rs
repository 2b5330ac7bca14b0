//! Analytic stability verdicts for the coupled plant/denoiser system.
//!
//! Scalar systems get an exact answer from the trace/determinant test of
//! the 2×2 augmented matrix, phrased as two conditions:
//!
//! * the demonstrator itself stabilizes the plant, `A − BK < 0`;
//! * the denoising gain outruns the open-loop response,
//!   `σ < g·√(α/A)` (equivalently `K' = g²α/σ² > A`), vacuous for `A ≤ 0`.
//!
//! Matrix systems are elevated to `ẍ − (A − P)ẋ − P(A − BK)x = 0` with the
//! effective precision `P = g²α·Σ⁻¹`, and the symmetric parts of both
//! coefficients are tested for definiteness. Those tests are sufficient
//! only, so a failure is reported as inconclusive rather than unstable.

mod sweep;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Result, StabError};
use crate::matrixkit::Matrix;
pub use crate::sim::Label;

pub use sweep::{
    sweep_region, Axis, AxisSpec, EmpiricalSettings, SweepBase, SweepCell, SweepOptions,
    SweepResult,
};

/// Relative tolerance inside which a slack counts as a tie.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub label: Label,
    /// Signed slack of each condition; positive means satisfied.
    pub margins: BTreeMap<String, f64>,
    pub conditions: BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

impl StabilityVerdict {
    /// Smallest slack, or +∞ when no margins apply.
    pub fn margin_min(&self) -> f64 {
        self.margins.values().copied().fold(f64::INFINITY, f64::min)
    }
}

fn is_tie(slack: f64, scale: f64) -> bool {
    slack.abs() <= TIE_EPSILON * scale.max(1.0)
}

/// `[[A, B], [−λK, −λ]]` with λ either the scalar `1/σ²` (as a 1×1 matrix)
/// or a matrix-valued precision.
pub fn augmented_matrix(a: &Matrix, b: &Matrix, k: &Matrix, lambda: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || k.rows() != m || k.cols() != n {
        return Err(StabError::dim(format!(
            "augmented matrix needs A {n}×{n}, B {n}×{m}, K {m}×{n}; got A {}×{}, B {}×{}, K {}×{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            k.rows(),
            k.cols()
        )));
    }
    if lambda.rows() != m || lambda.cols() != m {
        return Err(StabError::dim(format!("gain must be {m}×{m}")));
    }
    let lower_left = lambda.matmul(k)?.scale(-1.0);
    Matrix::block(a, b, &lower_left, &lambda.scale(-1.0))
}

/// Scalar form of [`augmented_matrix`].
pub fn augmented_matrix_1d(a: f64, b: f64, k: f64, lambda: f64) -> Result<Matrix> {
    Matrix::from_rows(vec![vec![a, b], vec![-lambda * k, -lambda]])
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(StabError::param(format!("{name} must be positive, got {v}")))
    }
}

/// Exact verdict for a scalar plant under the scalar denoising controller.
pub fn analytic_1d(a: f64, b: f64, k: f64, sigma: f64, g: f64, alpha: f64) -> Result<StabilityVerdict> {
    require_positive("sigma", sigma)?;
    require_positive("g", g)?;
    require_positive("alpha", alpha)?;
    for (name, v) in [("A", a), ("B", b), ("K", k)] {
        if !v.is_finite() {
            return Err(StabError::NonFinite(name.into()));
        }
    }

    let bk = b * k;
    let kprime = g * g * alpha / (sigma * sigma);
    let mut margins = BTreeMap::new();
    let mut conditions = BTreeMap::new();
    let mut notes = Vec::new();

    let closed_slack = bk - a;
    let closed_tie = is_tie(closed_slack, a.abs().max(bk.abs()));
    let closed_ok = closed_slack > 0.0;
    margins.insert("closed_loop".to_string(), closed_slack);
    conditions.insert("closed_loop".to_string(), closed_ok);
    notes.push("closed loop: requires A - B*K < 0 (the demonstrator must be stabilizing)".to_string());

    let kprime_slack = kprime - a;
    margins.insert("kprime".to_string(), kprime_slack);

    let (gain_ok, gain_tie) = if a > 0.0 {
        let threshold = g * (alpha / a).sqrt();
        let slack = threshold - sigma;
        margins.insert("sigma".to_string(), slack);
        notes.push(format!(
            "diffusion gain: requires sigma < g*sqrt(alpha/A) = {threshold} (K' = g^2*alpha/sigma^2 > A)"
        ));
        (slack > 0.0, is_tie(slack, threshold.max(sigma)) || is_tie(kprime_slack, a.max(kprime)))
    } else {
        notes.push("diffusion gain: vacuous because A <= 0 (open-loop plant is not unstable)".to_string());
        (true, false)
    };
    conditions.insert("diffusion_gain".to_string(), gain_ok);

    let violated = (!closed_ok && !closed_tie) || (!gain_ok && !gain_tie);
    let label = if violated {
        Label::Unstable
    } else if closed_tie || gain_tie {
        Label::Marginal
    } else {
        Label::Stable
    };
    Ok(StabilityVerdict { label, margins, conditions, notes })
}

/// Coefficients `(C1, C0)` of `ẍ + C1·ẋ + C0·x = 0` for the elevated
/// system: `C1 = Σ⁻¹ − A`, `C0 = −Σ⁻¹(A − BK)`.
pub fn second_order_coefficients(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    sigma: &Matrix,
) -> Result<(Matrix, Matrix)> {
    if !sigma.is_positive_definite()? {
        return Err(StabError::param("covariance must be positive definite"));
    }
    second_order_coefficients_with_precision(a, b, k, &sigma.invert()?)
}

/// As [`second_order_coefficients`] with an explicit precision `P` in place
/// of Σ⁻¹.
pub fn second_order_coefficients_with_precision(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    precision: &Matrix,
) -> Result<(Matrix, Matrix)> {
    require_invertible_input(b)?;
    let closed = closed_loop(a, b, k)?;
    if precision.rows() != a.rows() || !precision.is_square() {
        return Err(StabError::dim("precision must match the state dimension"));
    }
    let c1 = precision.sub(a)?;
    let c0 = precision.matmul(&closed)?.scale(-1.0);
    Ok((c1, c0))
}

fn require_invertible_input(b: &Matrix) -> Result<()> {
    if !b.is_square() {
        return Err(StabError::dim(format!(
            "the matrix test needs a square, invertible B; got {}×{}",
            b.rows(),
            b.cols()
        )));
    }
    b.invert().map(|_| ())
}

/// `A − B·K`.
pub fn closed_loop(a: &Matrix, b: &Matrix, k: &Matrix) -> Result<Matrix> {
    a.sub(&b.matmul(k)?)
}

/// Sufficient-condition verdict for matrix systems.
pub fn analytic_ndim(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    sigma: &Matrix,
    g: f64,
    alpha: f64,
) -> Result<StabilityVerdict> {
    require_positive("g", g)?;
    require_positive("alpha", alpha)?;
    if !a.is_square() {
        return Err(StabError::dim("A must be square"));
    }
    require_invertible_input(b)?;
    if !sigma.is_positive_definite()? {
        return Err(StabError::param("covariance must be positive definite"));
    }
    let precision = sigma.invert()?.symmetric_part()?.scale(g * g * alpha);
    let closed = closed_loop(a, b, k)?;

    let s1_max = *a.symmetric_part()?.eig_sym()?.last().expect("non-empty");
    let p_min = precision.eig_sym()?[0];
    let precision_slack = p_min - s1_max;

    let lyap = precision.matmul(&closed)?.symmetric_part()?;
    let lyap_max = *lyap.eig_sym()?.last().expect("non-empty");
    let lyapunov_slack = -lyap_max;

    let mut margins = BTreeMap::new();
    margins.insert("precision".to_string(), precision_slack);
    margins.insert("lyapunov".to_string(), lyapunov_slack);
    let mut conditions = BTreeMap::new();
    conditions.insert("precision".to_string(), precision_slack > 0.0);
    conditions.insert("lyapunov".to_string(), lyapunov_slack > 0.0);

    let mut notes = vec![
        "damping: requires lambda_min(g^2*alpha*Sigma^-1) > lambda_max(sym(A))".to_string(),
        "stiffness: requires sym(g^2*alpha*Sigma^-1*(A - B*K)) negative definite (Lyapunov inequality)"
            .to_string(),
        "both conditions are sufficient only; failing them yields inconclusive".to_string(),
    ];
    if s1_max <= 0.0 {
        notes.push(
            "lambda_max(sym(A)) <= 0: the damping condition holds for every positive-definite covariance"
                .to_string(),
        );
    }

    let tie = is_tie(precision_slack, p_min.abs().max(s1_max.abs()))
        || is_tie(lyapunov_slack, lyap.max_abs());
    let label = if tie {
        Label::Marginal
    } else if precision_slack > 0.0 && lyapunov_slack > 0.0 {
        Label::Stable
    } else {
        Label::Inconclusive
    };
    Ok(StabilityVerdict { label, margins, conditions, notes })
}

/// Direct isotropic tests: `σ < g√α / √λ_max(S₁)` (vacuous when
/// `λ_max(S₁) ≤ 0`) and `λ_max(S₂) < 0`, with `S₁ = sym(A)` and
/// `S₂ = sym(A − BK)`.
pub fn isotropic_tests(
    a: &Matrix,
    b: &Matrix,
    k: &Matrix,
    sigma: f64,
    g: f64,
    alpha: f64,
) -> Result<(bool, bool)> {
    let s1_max = *a.symmetric_part()?.eig_sym()?.last().expect("non-empty");
    let s2_max = *closed_loop(a, b, k)?.symmetric_part()?.eig_sym()?.last().expect("non-empty");
    let damping = s1_max <= 0.0 || sigma < g * alpha.sqrt() / s1_max.sqrt();
    Ok((damping, s2_max < 0.0))
}

/// Rows of the scalar stability table, completed with the case the table
/// leaves implicit (a stable plant under a destabilizing demonstrator).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRow {
    /// A > 0 and A − BK ≥ 0: unstable for every K'.
    UnstablePlantUnstableExpert,
    /// A > 0, A − BK < 0, K' ≥ A: stable.
    UnstablePlantFastDiffusion,
    /// A > 0, A − BK < 0, K' < A: unstable.
    UnstablePlantSlowDiffusion,
    /// A ≤ 0, A − BK < 0, K' ≥ 0: stable.
    StablePlant,
    /// A ≤ 0 and A − BK ≥ 0: unstable, since the augmented determinant
    /// `K'·(BK − A)` is then non-positive.
    StablePlantUnstableExpert,
}

impl TableRow {
    pub fn label(self) -> Label {
        match self {
            TableRow::UnstablePlantFastDiffusion | TableRow::StablePlant => Label::Stable,
            _ => Label::Unstable,
        }
    }
}

/// Looks up the table row for a scalar system from `A`, `A − BK` and `K'`.
pub fn classify_table_row(a: f64, closed_loop: f64, kprime: f64) -> TableRow {
    match (a > 0.0, closed_loop < 0.0) {
        (true, false) => TableRow::UnstablePlantUnstableExpert,
        (true, true) if kprime >= a => TableRow::UnstablePlantFastDiffusion,
        (true, true) => TableRow::UnstablePlantSlowDiffusion,
        (false, true) => TableRow::StablePlant,
        (false, false) => TableRow::StablePlantUnstableExpert,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(rows: Vec<Vec<f64>>) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn augmented_matrix_examples() {
        assert_eq!(augmented_matrix_1d(2.0, 1.0, 3.0, 3.0).unwrap(), m(vec![vec![2.0, 1.0], vec![-9.0, -3.0]]));
        let zero_gain = augmented_matrix_1d(2.0, 1.0, 3.0, 0.0).unwrap();
        assert_eq!(zero_gain.row(0), &[2.0, 1.0]);
        assert!(zero_gain.row(1).iter().all(|v| *v == 0.0));
        assert_eq!(augmented_matrix_1d(0.0, 0.0, 0.0, 1.0).unwrap(), m(vec![vec![0.0, 0.0], vec![0.0, -1.0]]));

        let general = augmented_matrix(
            &Matrix::scalar(2.0).unwrap(),
            &Matrix::scalar(1.0).unwrap(),
            &Matrix::scalar(3.0).unwrap(),
            &Matrix::scalar(3.0).unwrap(),
        )
        .unwrap();
        assert_eq!(general, augmented_matrix_1d(2.0, 1.0, 3.0, 3.0).unwrap());
        assert!(augmented_matrix(
            &Matrix::identity(2),
            &Matrix::zeros(2, 1),
            &Matrix::zeros(2, 2),
            &Matrix::identity(1)
        )
        .is_err());
    }

    #[test]
    fn analytic_1d_examples() {
        let s3 = 1.0 / 3f64.sqrt();
        let v = analytic_1d(2.0, 1.0, 3.0, s3, 1.0, 1.0).unwrap();
        assert_eq!(v.label, Label::Stable);
        assert_abs_diff_eq!(v.margins["kprime"], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.margins["closed_loop"], 1.0, epsilon = 0.0);

        assert_eq!(analytic_1d(2.0, 1.0, 3.0, 1.0, 1.0, 1.0).unwrap().label, Label::Unstable);
        for sigma in [0.1, 1.0, 10.0] {
            assert_eq!(analytic_1d(-1.0, 1.0, 3.0, sigma, 1.0, 1.0).unwrap().label, Label::Stable);
        }
        assert_eq!(analytic_1d(4.0, 1.0, 5.0, 0.49, 1.0, 1.0).unwrap().label, Label::Stable);
        assert_eq!(analytic_1d(4.0, 1.0, 5.0, 0.51, 1.0, 1.0).unwrap().label, Label::Unstable);
        assert_abs_diff_eq!(
            analytic_1d(4.0, 1.0, 5.0, 0.3, 1.0, 1.0).unwrap().margins["sigma"],
            0.2,
            epsilon = 1e-15
        );
        assert_eq!(analytic_1d(4.0, 1.0, 5.0, 0.5, 1.0, 1.0).unwrap().label, Label::Marginal);
        assert!(analytic_1d(4.0, 1.0, 5.0, 0.0, 1.0, 1.0).is_err());
        assert!(analytic_1d(4.0, 1.0, 5.0, 0.5, -1.0, 1.0).is_err());
    }

    #[test]
    fn analytic_1d_agrees_with_the_augmented_spectrum_on_the_worked_cases() {
        let stable = augmented_matrix_1d(2.0, 1.0, 3.0, 3.0).unwrap().eig_2x2().unwrap();
        assert!(stable[0].re < 0.0);
        let unstable = augmented_matrix_1d(2.0, 1.0, 3.0, 1.0).unwrap().eig_2x2().unwrap();
        assert!(unstable[0].re > 0.0);
    }

    #[test]
    fn second_order_coefficient_examples() {
        let (c1, _) = second_order_coefficients(
            &Matrix::diag(&[4.0, 4.0]).unwrap(),
            &Matrix::identity(2),
            &Matrix::zeros(2, 2),
            &Matrix::identity(2).scale(0.25),
        )
        .unwrap();
        assert_eq!(c1.max_abs(), 0.0);

        let bk = 1.7;
        let (c1, c0) = second_order_coefficients(
            &Matrix::scalar(2.0).unwrap(),
            &Matrix::scalar(1.0).unwrap(),
            &Matrix::scalar(bk).unwrap(),
            &Matrix::scalar(1.0 / 3.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(c1[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c0[(0, 0)], 3.0 * (bk - 2.0), epsilon = 1e-14);

        let a = m(vec![vec![1.0, 2.0], vec![-0.5, 0.3]]);
        let (_, c0) =
            second_order_coefficients(&a, &Matrix::identity(2), &Matrix::zeros(2, 2), &Matrix::identity(2))
                .unwrap();
        assert_eq!(c0, a.scale(-1.0));

        assert!(second_order_coefficients(&a, &Matrix::zeros(2, 1), &Matrix::zeros(1, 2), &Matrix::identity(2))
            .is_err());
        assert!(second_order_coefficients(&a, &Matrix::zeros(2, 2), &Matrix::zeros(2, 2), &Matrix::identity(2))
            .is_err());
    }

    #[test]
    fn second_order_coefficients_reproduce_the_coupled_spectrum() {
        // det(s²I + sC1 + C0) = 0 must hold at every eigenvalue of the
        // augmented matrix; check it in 1D where both are explicit.
        let (a, b, k, lambda) = (0.7, 1.3, 2.0, 2.5);
        let (c1, c0) = second_order_coefficients(
            &Matrix::scalar(a).unwrap(),
            &Matrix::scalar(b).unwrap(),
            &Matrix::scalar(k).unwrap(),
            &Matrix::scalar(1.0 / lambda).unwrap(),
        )
        .unwrap();
        for s in augmented_matrix_1d(a, b, k, lambda).unwrap().eig_2x2().unwrap() {
            let r = s * s + s * c1[(0, 0)] + c0[(0, 0)];
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn analytic_ndim_diagonal_example() {
        let v = analytic_ndim(
            &Matrix::diag(&[-1.0, -2.0]).unwrap(),
            &Matrix::identity(2),
            &Matrix::zeros(2, 2),
            &Matrix::identity(2).scale(0.04),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(v.label, Label::Stable);
        assert_abs_diff_eq!(v.margins["precision"], 26.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v.margins["lyapunov"], 25.0, epsilon = 1e-9);
    }

    #[test]
    fn analytic_ndim_isotropic_threshold() {
        // sym(A) has eigenvalues {0, 2}, so σ* = 1/√2.
        let a = m(vec![vec![1.0, 2.0], vec![0.0, 1.0]]);
        let b = Matrix::identity(2);
        let k = Matrix::identity(2).scale(3.0);
        let star = 1.0 / 2f64.sqrt();
        for (sigma, expected) in [(0.95 * star, Label::Stable), (1.05 * star, Label::Inconclusive)] {
            let sig = Matrix::identity(2).scale(sigma * sigma);
            let v = analytic_ndim(&a, &b, &k, &sig, 1.0, 1.0).unwrap();
            assert_eq!(v.label, expected, "sigma {sigma}");
            assert_eq!(isotropic_tests(&a, &b, &k, sigma, 1.0, 1.0).unwrap(), (expected == Label::Stable, true));
        }
    }

    #[test]
    fn analytic_ndim_never_claims_unstable() {
        let v = analytic_ndim(
            &Matrix::identity(2).scale(5.0),
            &Matrix::identity(2),
            &Matrix::zeros(2, 2),
            &Matrix::identity(2),
            1.0,
            1.0,
        )
        .unwrap();
        assert_eq!(v.label, Label::Inconclusive);
        assert!(analytic_ndim(
            &Matrix::identity(2),
            &Matrix::zeros(2, 1),
            &Matrix::zeros(1, 2),
            &Matrix::identity(1),
            1.0,
            1.0
        )
        .is_err());
    }

    /// The symmetric-part conditions are not necessary, and with a large
    /// skew component in A − BK they are not sufficient either: both hold
    /// here while the coupled system has eigenvalues with real part ≈ +1.38.
    #[test]
    fn skew_dominated_closed_loop_escapes_the_symmetric_part_tests() {
        let a = Matrix::identity(2).scale(0.9);
        let closed = m(vec![vec![-1.0, -5.0], vec![5.0, -1.0]]);
        let k = a.sub(&closed).unwrap();
        let v = analytic_ndim(&a, &Matrix::identity(2), &k, &Matrix::identity(2), 1.0, 1.0).unwrap();
        assert_eq!(v.label, Label::Stable);

        // Characteristic polynomial of ẍ + C1ẋ + C0x with C1 = 0.1·I and
        // C0 = [[1, 5], [−5, 1]] factors as s² + 0.1s + 1 ± 5i.
        let root = |sign: f64| {
            let w = num_complex::Complex64::new(1.0, sign * 5.0);
            let disc = (num_complex::Complex64::new(0.01, 0.0) - 4.0 * w).sqrt();
            (-0.1 + disc) / 2.0
        };
        assert!(root(1.0).re.max(root(-1.0).re) > 1.3);
    }

    #[test]
    fn table_row_examples() {
        assert_eq!(classify_table_row(2.0, 1.0, 100.0).label(), Label::Unstable);
        assert_eq!(classify_table_row(2.0, -1.0, 3.0), TableRow::UnstablePlantFastDiffusion);
        assert_eq!(classify_table_row(2.0, -1.0, 1.0), TableRow::UnstablePlantSlowDiffusion);
        assert_eq!(classify_table_row(-1.0, -4.0, 0.5), TableRow::StablePlant);
        assert_eq!(classify_table_row(-1.0, 0.5, 0.5).label(), Label::Unstable);
    }

    proptest! {
        #[test]
        fn analytic_1d_matches_augmented_spectrum(
            a in -4.0f64..4.0, b in -2.0f64..2.0, k in -4.0f64..6.0,
            sigma in 0.1f64..3.0, g in 0.2f64..2.0, alpha in 0.2f64..4.0,
        ) {
            let kprime = g * g * alpha / (sigma * sigma);
            let top = augmented_matrix_1d(a, b, k, kprime).unwrap().eig_2x2().unwrap()[0].re;
            prop_assume!(top.abs() > 1e-6);
            let label = analytic_1d(a, b, k, sigma, g, alpha).unwrap().label;
            prop_assert_eq!(label, if top < 0.0 { Label::Stable } else { Label::Unstable });
            prop_assert_eq!(classify_table_row(a, a - b * k, kprime).label(), label);
        }

        #[test]
        fn sigma_threshold_is_the_single_flip(
            a in 0.2f64..4.0, gap in 0.1f64..3.0, g in 0.3f64..2.0, alpha in 0.3f64..3.0,
        ) {
            let star = g * (alpha / a).sqrt();
            let k = a + gap;
            let labels: Vec<Label> = (1..200)
                .map(|i| analytic_1d(a, 1.0, k, star * i as f64 / 100.0, g, alpha).unwrap().label)
                .collect();
            let flips = labels.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert!(flips <= 2);
            prop_assert_eq!(labels[98], Label::Stable);
            prop_assert_eq!(labels[100], Label::Unstable);
        }

        #[test]
        fn isotropic_ndim_equals_direct_scalar_tests(
            entries in proptest::collection::vec(-2.0f64..2.0, 4),
            kent in proptest::collection::vec(-2.0f64..2.0, 4),
            sigma in 0.2f64..2.0, g in 0.5f64..1.5, alpha in 0.5f64..2.0,
        ) {
            let a = Matrix::from_row_major(2, 2, entries).unwrap();
            let k = Matrix::from_row_major(2, 2, kent).unwrap();
            let b = Matrix::identity(2);
            let v = analytic_ndim(&a, &b, &k, &Matrix::identity(2).scale(sigma * sigma), g, alpha).unwrap();
            prop_assume!(v.label != Label::Marginal);
            let (d, s) = isotropic_tests(&a, &b, &k, sigma, g, alpha).unwrap();
            prop_assert_eq!(v.label == Label::Stable, d && s);
        }
    }
}
