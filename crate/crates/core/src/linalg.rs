//! Small dense linear-algebra helpers shared across the analysis modules:
//! definiteness verdicts with a scaled tolerance, removal of the uniform
//! rotor-angle-shift direction before eigenvalue checks, and Hermitian
//! eigenvalue extraction for frequency-domain certificates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Relative tolerance used by all semidefiniteness verdicts: a symmetric
/// matrix is accepted as PSD when `lambda_min >= -PSD_EPS * max(1, |lambda_max|)`.
pub const PSD_EPS: f64 = 1e-8;

/// Strict-interior margin for set-membership verdicts.
pub const INTERIOR_EPS: f64 = 1e-8;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Orthonormal basis of the complement of span{1} in R^n, returned as the
/// columns of an n x (n-1) matrix (Helmert construction).
pub fn ones_complement_basis(n: usize) -> DMatrix<f64> {
    assert!(n >= 1);
    let mut q = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let norm = (k as f64 * (k as f64 + 1.0)).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Restrict `m` to the complement of the uniform-shift direction of its
/// leading `n_angle` coordinates. The shift direction is assumed to lie in
/// the right kernel of `m`, so the spectrum of the result is the spectrum of
/// `m` with one structural zero removed. Remaining coordinates are untouched.
pub fn deflate_angle_shift(m: &DMatrix<f64>, n_angle: usize) -> DMatrix<f64> {
    let dim = m.nrows();
    assert_eq!(dim, m.ncols());
    assert!(n_angle <= dim && n_angle >= 1);
    let q = ones_complement_basis(n_angle);
    let rest = dim - n_angle;
    let mut t = DMatrix::zeros(dim, dim - 1);
    t.view_mut((0, 0), (n_angle, n_angle - 1)).copy_from(&q);
    for r in 0..rest {
        t[(n_angle + r, n_angle - 1 + r)] = 1.0;
    }
    t.transpose() * m * t
}

/// Eigenvalues of the symmetric part (A + A^T)/2, sorted ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Eigenvalues of the Hermitian part (A + A^H)/2, sorted ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Eigenvalues of a general real matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum of a general real matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// PSD verdict with the scaled tolerance convention. Returns the verdict and
/// the extreme eigenvalues `(lambda_min, lambda_max)`.
pub fn psd_verdict(m: &DMatrix<f64>) -> (bool, f64, f64) {
    let ev = sym_eigenvalues(m);
    if ev.is_empty() {
        return (true, f64::INFINITY, f64::NEG_INFINITY);
    }
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    (lo >= -PSD_EPS * hi.abs().max(1.0), lo, hi)
}

/// Max absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Max absolute entry of the asymmetric part A - A^T.
pub fn symmetry_gap(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

/// Split a complex matrix into real and imaginary parts.
pub fn re_im(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|c| c.re), m.map(|c| c.im))
}

/// Build a complex matrix from real and imaginary parts.
pub fn complex_from(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    assert_eq!(re.shape(), im.shape());
    CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        Complex64::new(re[(i, j)], im[(i, j)])
    })
}
