//! Dense eigen-decompositions used by both principal component routes.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Coordinates with modulus at or below this are skipped when fixing phase.
pub const PHASE_TOLERANCE: f64 = 1e-9;

/// Eigenpairs of a Hermitian matrix, sorted by descending eigenvalue.
///
/// Column `k` of the returned matrix is the unit-norm eigenvector for
/// eigenvalue `k`, phase-normalised with [`normalize_phase`]. `None` means
/// the QR iteration did not converge.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> Option<(Vec<f64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let sym = hermitian_part(m);
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<Complex64> = eig.eigenvectors.column(src).iter().copied().collect();
        normalize_phase(&mut col);
        vectors.column_mut(dst).copy_from_slice(&col);
    }
    Some((values, vectors))
}

/// Eigenpairs of a real symmetric matrix, descending, with the first
/// significant loading of every eigenvector made positive.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Option<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        if let Some(lead) = col.iter().find(|x| x.abs() > PHASE_TOLERANCE) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
        vectors.set_column(dst, &col);
    }
    Some((values, vectors))
}

/// Rotates `v` so that its first coordinate with modulus above
/// [`PHASE_TOLERANCE`] is real and nonnegative.
pub fn normalize_phase(v: &mut [Complex64]) {
    if let Some(lead) = v.iter().find(|z| z.norm() > PHASE_TOLERANCE).copied() {
        let rot = lead.conj() / lead.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
        // the rotated lead is real up to roundoff; pin it
        if let Some(z) = v.iter_mut().find(|z| z.norm() > PHASE_TOLERANCE) {
            *z = Complex64::new(z.norm(), 0.0);
        }
    }
}

/// `(M + M*) / 2`.
pub fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).map(|z| z * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&m).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        assert!((vecs[(1, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((vecs[(0, 1)] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_convention_rotates_imaginary_lead() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = vec![c(0.0, s), c(0.0, s)];
        normalize_phase(&mut v);
        assert!((v[0] - c(s, 0.0)).norm() < 1e-15);
        assert!((v[1] - c(s, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_convention_skips_negligible_leading_coordinates() {
        let mut v = vec![c(1e-12, 0.0), c(0.0, -1.0)];
        normalize_phase(&mut v);
        assert!(v[1].im.abs() < 1e-15 && v[1].re > 0.0);
    }

    #[test]
    fn complex_hermitian_reconstruction() {
        // [[2, i], [-i, 2]] has eigenvalues 3 and 1
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let mut rec = DMatrix::<Complex64>::zeros(2, 2);
        for (k, &val) in vals.iter().enumerate() {
            let v = vecs.column(k);
            rec += (v * v.adjoint()) * c(val, 0.0);
        }
        assert!((rec - m).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn symmetric_sign_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && vals[1].abs() < 1e-12);
        assert!(vecs[(0, 0)] > 0.0 && vecs[(1, 0)] > 0.0);
    }
}
