//! Small dense complex matrices (one or two channels) and the handful of
//! operations the line models need on them.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const J: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn scalar(z: C64) -> CMat {
    CMat::from_element(1, 1, z)
}

pub fn diag(values: &[C64]) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

pub fn from_real(rows: &[Vec<f64>]) -> CMat {
    let n = rows.len();
    CMat::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0))
}

/// Frobenius norm.
pub fn norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Inverse with a relative singularity guard. Closed forms for 1x1 and 2x2.
pub fn inverse(m: &CMat) -> Option<CMat> {
    let scale = m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    match m.nrows() {
        1 => {
            let z = m[(0, 0)];
            Some(scalar(ONE / z))
        }
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let det = a * d - b * c;
            if det.norm() <= 1e-14 * scale * scale {
                return None;
            }
            let inv = ONE / det;
            Some(CMat::from_row_slice(
                2,
                2,
                &[d * inv, -b * inv, -c * inv, a * inv],
            ))
        }
        _ => m.clone().try_inverse(),
    }
}

/// Eigendecomposition `m = T diag(lambda) T^-1` for 1x1 and 2x2 matrices.
///
/// Returns `None` for defective (non-diagonalizable) input.
pub fn eig_small(m: &CMat) -> Option<(Vec<C64>, CMat)> {
    match m.nrows() {
        1 => Some((vec![m[(0, 0)]], identity(1))),
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
            if scale == 0.0 {
                return Some((vec![ZERO, ZERO], identity(2)));
            }
            let tol = 1e-13 * scale;
            if b.norm() <= tol && c.norm() <= tol {
                return Some((vec![a, d], identity(2)));
            }
            let half_tr = (a + d) * 0.5;
            let disc = (((a - d) * 0.5).powu(2) + b * c).sqrt();
            if disc.norm() <= 1e-10 * scale {
                // repeated eigenvalue with non-zero off-diagonal part: defective
                return None;
            }
            let lambdas = [half_tr + disc, half_tr - disc];
            let mut t = CMat::zeros(2, 2);
            for (k, &lam) in lambdas.iter().enumerate() {
                let (v0, v1) = if b.norm() >= c.norm() {
                    (b, lam - a)
                } else {
                    (lam - d, c)
                };
                let nv = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
                t[(0, k)] = v0 / nv;
                t[(1, k)] = v1 / nv;
            }
            Some((lambdas.to_vec(), t))
        }
        _ => None,
    }
}

/// `T diag(values) T^-1`.
pub fn reconstruct(t: &CMat, t_inv: &CMat, values: &[C64]) -> CMat {
    t * diag(values) * t_inv
}

/// Relative Frobenius distance `|a - b| / max(|b|, floor)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    let denom = norm(b).max(f64::MIN_POSITIVE);
    norm(&(a - b)) / denom
}
