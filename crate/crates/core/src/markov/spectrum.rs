//! Eigenvalue helpers for finite kernels.
//!
//! Reversible kernels are handled through the symmetric matrix
//! `D^{1/2} P D^{-1/2}`; everything else falls back to a real Schur
//! decomposition.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use super::{FiniteKernel, ProbVector};
use crate::tol;

/// Eigenvalues of a general square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// `P − 1πᵀ`, the restriction of `P` to π-centered functions with the
/// constant direction deflated to zero.
pub fn centered_operator(p: &FiniteKernel, pi: &ProbVector) -> DMatrix<f64> {
    let n = p.size();
    let w = pi.weights();
    DMatrix::from_fn(n, n, |i, j| p.entry(i, j) - w[j])
}

fn is_reversible(p: &FiniteKernel, pi: &ProbVector) -> bool {
    super::max_detailed_balance_violation(p, pi).is_ok_and(|(_, _, v)| v <= tol::ENTRY)
}

/// `D^{1/2} M D^{-1/2}` symmetrized by averaging with its transpose.
fn symmetrized(m: &DMatrix<f64>, pi: &ProbVector) -> DMatrix<f64> {
    let n = m.nrows();
    let sq: DVector<f64> = DVector::from_iterator(n, pi.weights().iter().map(|w| w.sqrt()));
    let s = DMatrix::from_fn(n, n, |i, j| sq[i] * m[(i, j)] / sq[j]);
    (&s + s.transpose()) * 0.5
}

/// Real spectrum of a π-reversible kernel, sorted in decreasing order.
pub fn reversible_spectrum(p: &FiniteKernel, pi: &ProbVector) -> Vec<f64> {
    let s = symmetrized(p.matrix(), pi);
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Eigenvalues of `P` on the π-centered subspace (one entry per eigenvalue
/// of `P`, the principal eigenvalue replaced by zero).
pub fn centered_eigenvalues(p: &FiniteKernel, pi: &ProbVector) -> Vec<Complex<f64>> {
    let c = centered_operator(p, pi);
    if is_reversible(p, pi) {
        SymmetricEigen::new(symmetrized(&c, pi)).eigenvalues.iter().map(|&v| Complex::new(v, 0.0)).collect()
    } else {
        eigenvalues(&c)
    }
}

/// Spectral radius of `P` restricted to π-centered functions.
pub fn centered_spectral_radius(p: &FiniteKernel, pi: &ProbVector) -> f64 {
    centered_eigenvalues(p, pi).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Number of eigenvalues of `P` within `tol` of 1.
pub fn unit_eigenvalue_multiplicity(p: &FiniteKernel, tol: f64) -> usize {
    eigenvalues(p.matrix()).iter().filter(|z| (*z - Complex::new(1.0, 0.0)).norm() <= tol).count()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
