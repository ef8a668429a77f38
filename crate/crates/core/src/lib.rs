//! Asymptotic-variance orderings for data-augmentation MCMC.
//!
//! The crate has two halves. The finite-state half ([`markov`],
//! [`variance`], [`exactify`], [`ergodicity`]) computes transition matrices,
//! asymptotic variances and ergodicity certificates exactly, in dense double
//! precision. The simulation half ([`sampler`], [`pseudo_marginal`],
//! [`special`]) runs the same algorithms on general state spaces with
//! explicit, reproducible random streams.
//!
//! ```
//! use varorder::markov::{two_state_q0, FunctionVector, ProbVector};
//! use varorder::variance::asvar_homogeneous;
//!
//! let q0 = two_state_q0(0.5).unwrap();
//! let pi = ProbVector::uniform(2).unwrap();
//! let f = FunctionVector::new(vec![-1.0, 1.0]).unwrap();
//! let v = asvar_homogeneous(&q0, &pi, &f).unwrap();
//! assert!((v.value - 1.0 / 3.0).abs() < 1e-12);
//! ```

pub mod ergodicity;
pub mod error;
pub mod exactify;
pub mod markov;
pub mod pseudo_marginal;
pub mod sampler;
pub mod special;
pub mod toys;
pub mod variance;

pub use error::{Error, Factor, Result};

/// Numerical tolerances shared across modules.
pub mod tol {
    /// Entrywise tolerance for stochasticity, invariance and detailed balance.
    pub const ENTRY: f64 = 1e-12;
    /// Tolerance for eigenvalues and inner products.
    pub const INNER: f64 = 1e-10;
    /// Distance from 1 below which an eigenvalue counts as a unit eigenvalue.
    pub const UNIT_EIGENVALUE: f64 = 1e-9;
    /// Margin added to the second eigenvalue modulus when fitting geometric bounds.
    pub const RHO_MARGIN: f64 = 1e-6;
}
