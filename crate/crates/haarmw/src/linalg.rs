//! Thin dense linear-algebra helpers over the leaf basis.
//!
//! Everything funnels through nalgebra's symmetric eigendecomposition and
//! SVD; the helpers add the PSD conventions used throughout the crate:
//! eigenvalues below a relative cutoff are exact zeros, and functional
//! calculus (sqrt, pseudoinverse) is applied on the surviving spectrum.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
// resolves float math in no_std builds; with std in the crate graph the
// inherent methods shadow it
#[allow(unused_imports)]
use num_traits::Float;

use crate::tol;
use crate::{Error, Result};

/// Symmetric eigendecomposition of `0.5 * (a + a^T)`.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let se = sym.symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = 1.0 + a.amax();
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol::PSD_INPUT * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

/// Apply `f` to the eigenvalues of a symmetric PSD matrix, treating
/// eigenvalues below `rel_tol * lambda_max` as zero.
fn psd_calculus(a: &DMatrix<f64>, rel_tol: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(a);
    let lambda_max = vals.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_tol * lambda_max;
    let mapped: Vec<f64> = vals
        .iter()
        .map(|&l| if l <= cutoff { 0.0 } else { f(l) })
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(mapped));
    &vecs * d * vecs.transpose()
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix: zero on the
/// kernel, inverse on the range. `psd_pinv(0) = 0`.
pub fn psd_pinv(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    Ok(psd_calculus(a, rel_tol, |l| 1.0 / l))
}

/// PSD square root.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    psd_calculus(a, tol::REL_EIG_CUTOFF, f64::sqrt)
}

/// Pseudoinverse square root: `A^{+1/2}`, i.e. `1/sqrt` on the range of A.
pub fn psd_pinv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    psd_calculus(a, tol::REL_EIG_CUTOFF, |l| 1.0 / l.sqrt())
}

/// Orthogonal projection onto the kernel of a symmetric PSD matrix.
pub fn kernel_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::identity(n, n) - psd_calculus(a, tol::REL_EIG_CUTOFF, |_| 1.0)
}

/// Largest singular value (spectral operator norm). Empty matrices have
/// norm zero.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Largest eigenvalue of a symmetric PSD matrix (zero for empty input).
pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let (vals, _) = sym_eigen(a);
    vals.iter().cloned().fold(0.0, f64::max)
}
