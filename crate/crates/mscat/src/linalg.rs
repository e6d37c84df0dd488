//! Thin helpers over `nalgebra` for the dense Hermitian kernels used
//! throughout the crate: sorted eigendecompositions, positive-definite
//! solves and spectral norms.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

/// Complex scalar used for all matrix data.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;
/// Dense complex vector.
pub type CVector = DVector<C64>;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix dimensions do not match: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("matrix is singular or not positive definite")]
    Singular,
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn hermitian_eigen_sorted(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, sorted ascending.
pub fn hermitian_eigenvalues_sorted(m: &CMatrix) -> Vec<f64> {
    let ev = m.clone().symmetric_eigenvalues();
    let mut values: Vec<f64> = ev.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Eigendecomposition of a real symmetric matrix, sorted ascending.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Spectral norm of a Hermitian matrix (largest eigenvalue magnitude).
pub fn hermitian_spectral_norm(m: &CMatrix) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc, &v| acc.max(v.abs()))
}

/// Forces exact Hermitian symmetry, averaging away rounding asymmetry.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Solves `A X = B` for Hermitian positive definite `A` via Cholesky.
pub fn hpd_solve(a: &CMatrix, b: &CMatrix) -> Result<CMatrix, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch(
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
        ));
    }
    let chol = a.clone().cholesky().ok_or(LinalgError::Singular)?;
    Ok(chol.solve(b))
}

/// Solves `A x = b` for a general invertible `A` via LU.
pub fn lu_solve(a: &CMatrix, b: &CVector) -> Result<CVector, LinalgError> {
    a.clone().lu().solve(b).ok_or(LinalgError::Singular)
}

/// Inverse of a Hermitian positive definite matrix.
pub fn hpd_inverse(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let chol = a.clone().cholesky().ok_or(LinalgError::Singular)?;
    Ok(chol.inverse())
}

/// Hermitian square root `C^{1/2}` of a positive semidefinite matrix.
pub fn hermitian_sqrt(c: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen_sorted(c);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        let root = C64::new(v.max(0.0).sqrt(), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= root;
        }
    }
    let mut out = &scaled * vectors.adjoint();
    hermitize(&mut out);
    out
}

/// Real part of the quadratic form `x^* A x` (real for Hermitian `A`).
pub fn quadratic_form(a: &CMatrix, x: &CVector) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}
