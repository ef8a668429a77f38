use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::spectrum::min_symmetric_eigenvalue;
use super::{FiniteKernel, ProbVector};
use crate::error::{Error, Result};
use crate::tol;

/// What made an ordering or reversibility check fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Matrix entry `(row, col)` and its signed margin (negative on failure
    /// for orderings, the absolute violation for detailed balance).
    Entry { row: usize, col: usize, margin: f64 },
    /// Offending eigenvalue of the quadratic-form matrix.
    Eigenvalue { value: f64 },
}

/// Outcome of an ordering or detailed-balance check. A witness is present
/// exactly when the check fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCertificate {
    holds: bool,
    witness: Option<Witness>,
}

impl OrderingCertificate {
    pub fn pass() -> Self {
        Self { holds: true, witness: None }
    }

    pub fn fail(witness: Witness) -> Self {
        Self { holds: false, witness: Some(witness) }
    }

    pub fn holds(&self) -> bool {
        self.holds
    }

    pub fn witness(&self) -> Option<&Witness> {
        self.witness.as_ref()
    }
}

/// Largest `|π_i P_ij − π_j P_ji|` with its location.
pub fn max_detailed_balance_violation(p: &FiniteKernel, pi: &ProbVector) -> Result<(usize, usize, f64)> {
    let n = p.size();
    if pi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
    }
    let w = pi.weights();
    let mut worst = (0, 0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let v = (w[i] * p.entry(i, j) - w[j] * p.entry(j, i)).abs();
            if v > worst.2 {
                worst = (i, j, v);
            }
        }
    }
    Ok(worst)
}

/// Detailed balance `π_i P_ij = π_j P_ji` up to `tol`.
pub fn detailed_balance_check(p: &FiniteKernel, pi: &ProbVector, tol: f64) -> Result<OrderingCertificate> {
    if !pi.is_strictly_positive() {
        return Err(Error::InvalidProbVector("π must be strictly positive".into()));
    }
    let (row, col, margin) = max_detailed_balance_violation(p, pi)?;
    Ok(if margin <= tol {
        OrderingCertificate::pass()
    } else {
        OrderingCertificate::fail(Witness::Entry { row, col, margin })
    })
}

fn require_reversible(p: &FiniteKernel, pi: &ProbVector) -> Result<()> {
    let (row, col, violation) = max_detailed_balance_violation(p, pi)?;
    if violation > tol::ENTRY {
        return Err(Error::NotReversible { row, col, violation });
    }
    Ok(())
}

/// Covariance ordering: does `P1` dominate `P0`, i.e. `⟨f, P1 f⟩ ≤ ⟨f, P0 f⟩`
/// for every `f`? Decided by positive semidefiniteness of `D_π (P0 − P1)`.
pub fn covariance_order_check(
    p0: &FiniteKernel,
    p1: &FiniteKernel,
    pi: &ProbVector,
    tol: f64,
) -> Result<OrderingCertificate> {
    if !p0.same_space(p1) {
        return Err(Error::SpaceMismatch);
    }
    require_reversible(p0, pi)?;
    require_reversible(p1, pi)?;
    let n = p0.size();
    let w = pi.weights();
    let diff = DMatrix::from_fn(n, n, |i, j| w[i] * (p0.entry(i, j) - p1.entry(i, j)));
    let sym = (&diff + diff.transpose()) * 0.5;
    let min = min_symmetric_eigenvalue(&sym);
    Ok(if min >= -tol {
        OrderingCertificate::pass()
    } else {
        OrderingCertificate::fail(Witness::Eigenvalue { value: min })
    })
}

/// Off-diagonal (Peskun) ordering: `P1_ij ≥ P0_ij − tol` for all `i ≠ j`.
pub fn off_diagonal_order_check(
    p0: &FiniteKernel,
    p1: &FiniteKernel,
    tol: f64,
) -> Result<OrderingCertificate> {
    if !p0.same_space(p1) {
        return Err(Error::SpaceMismatch);
    }
    let n = p0.size();
    let mut worst: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let margin = p1.entry(i, j) - p0.entry(i, j);
            if margin < -tol && worst.is_none_or(|(_, _, m)| margin < m) {
                worst = Some((i, j, margin));
            }
        }
    }
    Ok(match worst {
        None => OrderingCertificate::pass(),
        Some((row, col, margin)) => OrderingCertificate::fail(Witness::Entry { row, col, margin }),
    })
}

/// `(P0, P1) = ((1 − a) P + a I, P)`; `P1` dominates `P0` off the diagonal.
pub fn lazy_pair(p: &FiniteKernel, a: f64) -> Result<(FiniteKernel, FiniteKernel)> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("laziness {a} outside (0, 1)")));
    }
    let eye = FiniteKernel::identity(p.space().clone());
    Ok((p.mix(&eye, a)?, p.clone()))
}
