//! Random system generators shared by the acceptance checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stab_core::analysis::{augmented_matrix_1d, TableRow};
use stab_core::matrixkit::Matrix;

/// One scalar system: plant `(a, b)`, expert gain `k`, effective gain `kprime`.
#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub kprime: f64,
}

/// Largest real part of the scalar augmented matrix.
pub fn max_real_part(a: f64, b: f64, k: f64, kprime: f64) -> f64 {
    let eig = augmented_matrix_1d(a, b, k, kprime).unwrap().eig_2x2().unwrap();
    eig[0].re.max(eig[1].re)
}

/// Rejection-sampled scalar systems; the accepted draw keeps every margin
/// and the dominant real part at least `gap` away from zero.
pub fn draw_row(rng: &mut ChaCha8Rng, row: TableRow, gap: f64) -> Draw {
    loop {
        let a_pos = matches!(
            row,
            TableRow::UnstablePlantUnstableExpert | TableRow::UnstablePlantFastDiffusion | TableRow::UnstablePlantSlowDiffusion
        );
        let a = if a_pos { rng.random_range(0.05..3.0) } else { rng.random_range(-3.0..0.0) };
        let b = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.5..2.0);
        let closed: f64 = match row {
            TableRow::UnstablePlantUnstableExpert | TableRow::StablePlantUnstableExpert => rng.random_range(0.05..3.0),
            _ => rng.random_range(-4.0..-0.05),
        };
        let kprime: f64 = rng.random_range(0.1..10.0);
        let k = (a - closed) / b;
        let fits = match row {
            TableRow::UnstablePlantFastDiffusion => kprime > a + gap,
            TableRow::UnstablePlantSlowDiffusion => kprime < a - gap,
            _ => (kprime - a).abs() > gap,
        };
        if fits && closed.abs() > gap && max_real_part(a, b, k, kprime).abs() > gap {
            return Draw { a, b, k, kprime };
        }
    }
}

/// Entries uniform in `[-scale, scale)`.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> Matrix {
    let data = (0..n * m).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Matrix::from_row_major(n, m, data).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let l = random_matrix(rng, n, n, 1.0);
    l.matmul(&l.transpose()).unwrap().add(&Matrix::identity(n).scale(0.1)).unwrap().symmetric_part().unwrap()
}
