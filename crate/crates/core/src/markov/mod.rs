//! Finite-state kernel algebra.
//!
//! Everything here works on dense row-stochastic matrices over a small
//! labeled state space. Kernels, distributions and functions are immutable
//! once validated, so they can be shared freely between threads.

mod generate;
mod io;
mod order;
pub mod spectrum;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tol;

pub use generate::{
    cyclic_kernel, flip_kernel, random_function, random_prob_vector, random_reversible_kernel, two_state_q0,
};
pub use io::KernelDocument;
pub use order::{
    covariance_order_check, detailed_balance_check, lazy_pair, max_detailed_balance_violation,
    off_diagonal_order_check, OrderingCertificate, Witness,
};

/// Labels of a finite state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidSpace("state space must have at least one state".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// States labeled `"0"`, `"1"`, ... `"n-1"`.
    pub fn anonymous(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A probability vector; nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(DVector<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidProbVector(format!("weight {w} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol::ENTRY {
            return Err(Error::InvalidProbVector(format!("weights sum to {total}")));
        }
        Ok(Self(DVector::from_vec(weights)))
    }

    /// Normalizes nonnegative masses into a probability vector.
    pub fn normalized(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidProbVector(format!("total mass {total}")));
        }
        Self::new(masses.into_iter().map(|m| m / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProbVector("empty".into()));
        }
        Ok(Self(DVector::from_element(n, 1.0 / n as f64)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }

    /// πf
    pub fn expect(&self, f: &FunctionVector) -> f64 {
        self.0.dot(f.as_vector())
    }

    /// Total-variation distance `½ Σ |p_i − q_i|`.
    pub fn total_variation(&self, other: &ProbVector) -> f64 {
        0.5 * (&self.0 - &other.0).abs().sum()
    }
}

/// A real function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionVector(DVector<f64>);

impl FunctionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction(format!("value {v} is not finite")));
        }
        Ok(Self(DVector::from_vec(values)))
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(DVector::from_element(n, value))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// `f − πf`.
    pub fn centered(&self, pi: &ProbVector) -> FunctionVector {
        let mean = pi.expect(self);
        Self(self.0.map(|v| v - mean))
    }
}

/// `⟨f, g⟩ = Σ_i π_i f_i g_i`.
pub fn inner(pi: &ProbVector, f: &FunctionVector, g: &FunctionVector) -> f64 {
    pi.0.iter().zip(f.0.iter()).zip(g.0.iter()).map(|((p, a), b)| p * a * b).sum()
}

/// `Var_π(f) = πf² − (πf)²`.
pub fn variance(pi: &ProbVector, f: &FunctionVector) -> f64 {
    let fc = f.centered(pi);
    inner(pi, &fc, &fc)
}

/// A row-stochastic matrix over a labeled finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    space: Arc<StateSpace>,
    matrix: DMatrix<f64>,
}

impl FiniteKernel {
    pub fn new(space: Arc<StateSpace>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = space.size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: matrix.nrows().max(matrix.ncols()) });
        }
        for (idx, &v) in matrix.iter().enumerate() {
            if !v.is_finite() || !(-tol::ENTRY..=1.0 + tol::ENTRY).contains(&v) {
                // column-major storage
                let (i, j) = (idx % n, idx / n);
                return Err(Error::InvalidKernel(format!("entry ({i}, {j}) = {v} outside [0, 1]")));
            }
        }
        for i in 0..n {
            let s = matrix.row(i).sum();
            if (s - 1.0).abs() > tol::ENTRY {
                return Err(Error::InvalidKernel(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { space, matrix })
    }

    /// Kernel on an anonymous space from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidKernel("matrix is not square".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let space = Arc::new(StateSpace::anonymous(n)?);
        Self::new(space, DMatrix::from_row_slice(n, n, &data))
    }

    pub fn identity(space: Arc<StateSpace>) -> Self {
        let n = space.size();
        Self { space, matrix: DMatrix::identity(n, n) }
    }

    /// The kernel Π whose rows all equal `pi`.
    pub fn independent(space: Arc<StateSpace>, pi: &ProbVector) -> Result<Self> {
        let n = space.size();
        if pi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
        }
        let matrix = DMatrix::from_fn(n, n, |_, j| pi.weights()[j]);
        Ok(Self { space, matrix })
    }

    pub fn size(&self) -> usize {
        self.space.size()
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn same_space(&self, other: &FiniteKernel) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || self.space == other.space
    }

    /// `(Pf)(x) = Σ_y P(x, y) f(y)`.
    pub fn apply(&self, f: &FunctionVector) -> FunctionVector {
        FunctionVector(&self.matrix * &f.0)
    }

    /// `μP` for a (possibly signed) row vector `μ`.
    pub fn push_forward(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(mu)
    }

    /// `max_j |(πP)_j − π_j|`.
    pub fn invariance_residual(&self, pi: &ProbVector) -> f64 {
        (self.push_forward(pi.as_vector()) - pi.as_vector()).amax()
    }

    pub fn check_invariant(&self, pi: &ProbVector) -> Result<()> {
        if pi.len() != self.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), found: pi.len() });
        }
        let residual = self.invariance_residual(pi);
        if residual > tol::ENTRY {
            return Err(Error::NotInvariant { residual });
        }
        Ok(())
    }

    /// Convex combination `(1 − a) self + a other`.
    pub fn mix(&self, other: &FiniteKernel, a: f64) -> Result<FiniteKernel> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!("mixing weight {a} outside [0, 1]")));
        }
        let matrix = &self.matrix * (1.0 - a) + &other.matrix * a;
        FiniteKernel::new(self.space.clone(), matrix)
    }

    /// `P^n`.
    pub fn power(&self, n: usize) -> FiniteKernel {
        let mut acc = DMatrix::identity(self.size(), self.size());
        for _ in 0..n {
            acc = &acc * &self.matrix;
        }
        FiniteKernel { space: self.space.clone(), matrix: acc }
    }
}

/// The product kernel `PQ` (first `P`, then `Q`).
pub fn compose(p: &FiniteKernel, q: &FiniteKernel) -> Result<FiniteKernel> {
    if !p.same_space(q) {
        return Err(Error::SpaceMismatch);
    }
    let matrix = &p.matrix * &q.matrix;
    FiniteKernel::new(p.space.clone(), matrix)
}

/// Lag-one autocovariance form `⟨f, Pf⟩ = Σ_i π_i f_i (Pf)_i`.
pub fn lag_one_autocov(p: &FiniteKernel, pi: &ProbVector, f: &FunctionVector) -> f64 {
    inner(pi, f, &p.apply(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space(n: usize) -> Arc<StateSpace> {
        Arc::new(StateSpace::anonymous(n).unwrap())
    }

    #[test]
    fn state_space_rejects_duplicates_and_empty() {
        assert!(StateSpace::new(vec![]).is_err());
        assert!(StateSpace::new(vec!["a".into(), "a".into()]).is_err());
        let s = StateSpace::new(vec!["-1".into(), "1".into()]).unwrap();
        assert_eq!(s.index_of("1"), Some(1));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn kernel_validation() {
        assert!(FiniteKernel::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::from_rows(&[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        assert!(FiniteKernel::from_rows(&[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn identity_compose_is_neutral() {
        let q = two_state_q0(0.3).unwrap();
        let i = FiniteKernel::identity(q.space().clone());
        assert_eq!(compose(&i, &q).unwrap().matrix(), q.matrix());
    }

    #[test]
    fn independent_kernel_absorbs_invariant_kernel() {
        let pi = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = crate::sampler::RngStream::new(5, 0).rng();
        let q = random_reversible_kernel(&space(3), &pi, &mut rng).unwrap();
        let big_pi = FiniteKernel::independent(q.space().clone(), &pi).unwrap();
        let prod = compose(&big_pi, &q).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(prod.entry(i, j), pi.weights()[j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn independent_then_q0_product() {
        let q0 = two_state_q0(0.5).unwrap();
        assert_eq!(q0.matrix(), &DMatrix::from_row_slice(2, 2, &[0.25, 0.75, 0.75, 0.25]));
        let p0 = FiniteKernel::identity(q0.space().clone());
        assert_eq!(compose(&p0, &q0).unwrap(), q0);
    }

    #[test]
    fn compose_rejects_mismatched_spaces() {
        let a = FiniteKernel::identity(space(2));
        let b = FiniteKernel::identity(Arc::new(StateSpace::new(vec!["x".into(), "y".into()]).unwrap()));
        assert_eq!(compose(&a, &b), Err(Error::SpaceMismatch));
        let c = FiniteKernel::identity(space(3));
        assert_eq!(compose(&a, &c), Err(Error::SpaceMismatch));
    }

    #[test]
    fn lag_one_autocov_examples() {
        let pi = ProbVector::uniform(2).unwrap();
        let f = FunctionVector::new(vec![-1.0, 1.0]).unwrap();
        let q0 = two_state_q0(0.5).unwrap();
        assert_abs_diff_eq!(lag_one_autocov(&q0, &pi, &f), -0.5, epsilon = 1e-15);
        let eye = FiniteKernel::identity(q0.space().clone());
        assert_abs_diff_eq!(lag_one_autocov(&eye, &pi, &f), 1.0, epsilon = 1e-15);

        let pi3 = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let g = FunctionVector::new(vec![1.0, 4.0, -2.0]).unwrap();
        let big_pi = FiniteKernel::independent(space(3), &pi3).unwrap();
        let mean = pi3.expect(&g);
        assert_abs_diff_eq!(lag_one_autocov(&big_pi, &pi3, &g), mean * mean, epsilon = 1e-14);
    }
}
