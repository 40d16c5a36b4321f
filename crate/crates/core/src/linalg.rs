//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric part `(B + Bᵀ)/2`.
pub fn sym(b: &DMatrix<f64>) -> DMatrix<f64> {
    (b + b.transpose()) * 0.5
}

/// `B - Bᵀ` (not halved).
pub fn skew_difference(b: &DMatrix<f64>) -> DMatrix<f64> {
    b - b.transpose()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(sym(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Applies `f` to the eigenvalues of a symmetric positive definite matrix.
fn spd_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(sym(m));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&l| l <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_map(m, f64::sqrt)
}

pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_map(m, |l| 1.0 / l.sqrt())
}

/// True when `m` is symmetric (to `tol`) and positive definite.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && max_abs(&skew_difference(m)) <= tol && min_sym_eigenvalue(m) > 0.0
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Stacks `a` over `b`.
pub fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Splits a product-space point into its two halves.
pub fn split(p: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = p.len() / 2;
    (p.rows(0, n).into_owned(), p.rows(n, n).into_owned())
}

/// Rotation in the plane of axes `(i, j)` by `angle`.
pub fn givens(n: usize, i: usize, j: usize, angle: f64) -> DMatrix<f64> {
    let mut q = DMatrix::identity(n, n);
    let (s, c) = angle.sin_cos();
    q[(i, i)] = c;
    q[(j, j)] = c;
    q[(i, j)] = -s;
    q[(j, i)] = s;
    q
}

pub fn rotation2(theta: f64) -> DMatrix<f64> {
    givens(2, 0, 1, theta)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = spd_sqrt(&m).unwrap();
        assert!((&r * &r - &m).norm() < 1e-12);
        let ri = spd_inv_sqrt(&m).unwrap();
        assert!((&ri * &r - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(spd_sqrt(&m), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn givens_is_orthogonal() {
        let q = givens(3, 0, 2, 0.7);
        assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!((q.determinant() - 1.0).abs() < 1e-14);
    }
}
