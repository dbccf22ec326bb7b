//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen, Vector2};

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// (M + M') / 2
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix, or `None` when it is
/// not numerically PD (min eigenvalue <= `rel_tol` * max eigenvalue).
pub fn spd_inverse(m: &DMatrix<f64>, rel_tol: f64) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= rel_tol * max {
        return None;
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let mut inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    symmetrize(&mut inv);
    Some(inv)
}

/// Project a symmetric 2x2 matrix onto the PD cone by clipping eigenvalues
/// from below at `floor`. Returns the projected matrix and whether any
/// clipping happened.
pub fn nearest_pd2(m: &Matrix2<f64>, floor: f64) -> (Matrix2<f64>, bool) {
    let eig = m.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return (*m, false);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let out = eig.eigenvectors * Matrix2::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (0.5 * (out + out.transpose()), true)
}

/// Symmetric inverse square root of a 2x2 SPD matrix.
pub fn inv_sqrt2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let eig = m.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) || eig.eigenvalues.min() <= 1e-14 * max {
        return None;
    }
    let d = Vector2::new(
        eig.eigenvalues[0].sqrt().recip(),
        eig.eigenvalues[1].sqrt().recip(),
    );
    let out = eig.eigenvectors * Matrix2::from_diagonal(&d) * eig.eigenvectors.transpose();
    Some(0.5 * (out + out.transpose()))
}

/// Inverse of a 2x2 SPD matrix by the adjugate, `None` if the determinant
/// is negligible relative to the diagonal.
pub fn inv2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let scale = m[(0, 0)].abs() * m[(1, 1)].abs();
    if !(det > 1e-12 * scale) || !(m[(0, 0)] > 0.0) {
        return None;
    }
    Some(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Principal submatrix indexed by `idx`.
pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
