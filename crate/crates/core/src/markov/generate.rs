use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use super::{FiniteKernel, FunctionVector, ProbVector, StateSpace};
use crate::error::{Error, Result};

fn signed_pair() -> Arc<StateSpace> {
    Arc::new(StateSpace::new(vec!["-1".into(), "1".into()]).expect("two distinct labels"))
}

/// `δ_{−x}` on `{−1, 1}`.
pub fn flip_kernel() -> FiniteKernel {
    FiniteKernel::new(signed_pair(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
        .expect("flip kernel is stochastic")
}

/// `Q0(x, ·) = ε π + (1 − ε) δ_{−x}` on `{−1, 1}` with uniform π.
pub fn two_state_q0(eps: f64) -> Result<FiniteKernel> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} outside [0, 1]")));
    }
    let stay = eps / 2.0;
    let far = 1.0 - eps / 2.0;
    FiniteKernel::new(signed_pair(), DMatrix::from_row_slice(2, 2, &[stay, far, far, stay]))
}

/// Deterministic rotation `i → i + 1 mod n`.
pub fn cyclic_kernel(n: usize) -> Result<FiniteKernel> {
    let space = Arc::new(StateSpace::anonymous(n)?);
    let matrix = DMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { 1.0 } else { 0.0 });
    FiniteKernel::new(space, matrix)
}

/// Probability vector with masses bounded away from zero.
pub fn random_prob_vector(n: usize, rng: &mut dyn RngCore) -> Result<ProbVector> {
    ProbVector::normalized((0..n).map(|_| 0.1 + rng.random::<f64>()).collect())
}

pub fn random_function(n: usize, rng: &mut dyn RngCore) -> FunctionVector {
    FunctionVector::new((0..n).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect()).expect("finite draws")
}

/// Random π-reversible kernel: a Metropolis-Hastings correction of a random
/// proposal matrix, so `π_i P_ij = min(π_i K_ij, π_j K_ji)`.
pub fn random_reversible_kernel(
    space: &Arc<StateSpace>,
    pi: &ProbVector,
    rng: &mut dyn RngCore,
) -> Result<FiniteKernel> {
    let n = space.size();
    if pi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pi.len() });
    }
    if !pi.is_strictly_positive() {
        return Err(Error::InvalidProbVector("target must be strictly positive".into()));
    }
    let mut proposal = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
    for i in 0..n {
        let s = proposal.row(i).sum();
        proposal.row_mut(i).scale_mut(1.0 / s);
    }
    let w = pi.weights();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let flow = (w[i] * proposal[(i, j)]).min(w[j] * proposal[(j, i)]);
                matrix[(i, j)] = flow / w[i];
            }
        }
        let off: f64 = matrix.row(i).sum();
        matrix[(i, i)] = (1.0 - off).max(0.0);
    }
    FiniteKernel::new(space.clone(), matrix)
}
