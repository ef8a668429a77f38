//! Small finite augmented models used by the tests and the CLI.
//!
//! Every toy has strictly positive densities. Apart from the constant-weight
//! control, the refresh weights `w` vary with `u`, so systematic refreshment,
//! random refreshment and the noisy algorithm genuinely differ.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::exactify::FiniteAugmentedModel;
use crate::markov::{ProbVector, StateSpace};
use crate::pseudo_marginal::FiniteImportanceModel;
use crate::sampler::RngStream;
use crate::special::{FiniteGmtm, OmegaFamily};

fn stochastic(rows: usize, cols: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| 0.2 + rng.random::<f64>());
    for mut row in m.row_iter_mut() {
        let z = row.sum();
        row /= z;
    }
    m
}

fn labelled(prefix: &str, n: usize) -> Arc<StateSpace> {
    Arc::new(StateSpace::new((0..n).map(|i| format!("{prefix}{i}")).collect()).expect("distinct labels"))
}

/// Toy with positive random components drawn from `seed`. With `weighted`,
/// `R = Ř ∘ w` for a non-constant `w`; otherwise `w ≡ 1`.
pub fn random_toy(ny: usize, nu: usize, seed: u64, weighted: bool) -> FiniteAugmentedModel {
    let mut rng = RngStream::new(seed, 0).rng();
    let pi = ProbVector::normalized((0..ny).map(|_| 0.2 + rng.random::<f64>()).collect()).expect("positive");
    let r_check = stochastic(ny, nu, &mut rng);
    let weights = if weighted {
        DMatrix::from_fn(ny, nu, |_, _| 0.1 + 2.0 * rng.random::<f64>())
    } else {
        DMatrix::from_element(ny, nu, 1.0)
    };
    let s = stochastic(ny * nu, ny, &mut rng);
    let t = stochastic(ny * nu * ny, nu, &mut rng);
    FiniteAugmentedModel::with_weights(labelled("y", ny), labelled("u", nu), pi, r_check, weights, s, t)
        .expect("random toy is valid")
}

/// `|Y| = |U| = 2` with non-constant weights.
pub fn two_by_two() -> FiniteAugmentedModel {
    random_toy(2, 2, 11, true)
}

/// `w ≡ 1`, so every refresh variant coincides.
pub fn constant_weight() -> FiniteAugmentedModel {
    random_toy(3, 2, 12, false)
}

/// Uniform everything: every freeze proposal is accepted.
pub fn independent_uniform() -> FiniteAugmentedModel {
    let (ny, nu) = (3, 2);
    let uniform = |r: usize, c: usize| DMatrix::from_element(r, c, 1.0 / c as f64);
    FiniteAugmentedModel::new(
        labelled("y", ny),
        labelled("u", nu),
        ProbVector::uniform(ny).expect("non-empty"),
        uniform(ny, nu),
        uniform(ny * nu, ny),
        uniform(ny * nu * ny, nu),
    )
    .expect("uniform toy is valid")
}

/// GIMH toy: `|Y| = 2`, `|V| = 2`, `N = 2`, with a non-uniform importance
/// proposal so the estimate is genuinely noisy.
pub fn gimh_toy() -> (FiniteImportanceModel, DMatrix<f64>) {
    let pi_bar = DMatrix::from_row_slice(2, 2, &[0.3, 1.2, 0.9, 0.2]);
    let q = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.35, 0.65]);
    let s = DMatrix::from_row_slice(2, 2, &[0.4, 0.6, 0.7, 0.3]);
    (FiniteImportanceModel::new(pi_bar, q, 2).expect("valid importance toy"), s)
}

/// Finite augmented form of [`gimh_toy`].
pub fn gimh_augmented() -> FiniteAugmentedModel {
    let (imp, s) = gimh_toy();
    imp.to_augmented(&s).expect("valid GIMH toy")
}

/// GMTM toy: `|Y| = 3`, `n = 3` tries.
pub fn gmtm_toy(omega: OmegaFamily) -> FiniteGmtm {
    let pi = ProbVector::new(vec![0.2, 0.5, 0.3]).expect("valid target");
    let r = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.4, 0.2, 0.4, 0.1, 0.6, 0.3]);
    FiniteGmtm::new(pi, r, omega, 3).expect("valid GMTM toy")
}

/// The toys every exact comparison runs over.
pub fn registry() -> Vec<(&'static str, FiniteAugmentedModel)> {
    vec![
        ("toy-2x2", two_by_two()),
        ("toy-3x2", random_toy(3, 2, 21, true)),
        ("toy-3x3", random_toy(3, 3, 22, true)),
        ("toy-4x3", random_toy(4, 3, 23, true)),
        ("toy-constant-w", constant_weight()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_toys_are_weighted_as_advertised() {
        for (name, m) in registry() {
            assert!(m.has_weights(), "{name}");
            assert_eq!(m.weights_constant(), name == "toy-constant-w", "{name}");
        }
        assert!(!independent_uniform().has_weights());
    }

    #[test]
    fn toys_are_deterministic() {
        let a = two_by_two();
        let b = two_by_two();
        assert_eq!(a.joint_pi(), b.joint_pi());
    }
}
