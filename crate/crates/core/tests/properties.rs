use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;
use varorder::exactify::{extract_kernel, marginal_kernel, KernelKind};
use varorder::markov::{
    compose, covariance_order_check, detailed_balance_check, inner, lazy_pair, off_diagonal_order_check,
    random_function, random_prob_vector, random_reversible_kernel, FiniteKernel, FunctionVector, ProbVector,
    StateSpace,
};
use varorder::sampler::{log_freeze_ratio, RngStream};
use varorder::toys::random_toy;
use varorder::variance::{asvar_alternating, asvar_homogeneous, truncated_autocov_series, AlternatingModel};

struct Instance {
    pi: ProbVector,
    p: FiniteKernel,
    q: FiniteKernel,
    f: FunctionVector,
    g: FunctionVector,
}

fn instance(seed: u64, n: usize) -> Instance {
    let mut rng = RngStream::new(seed, 0).rng();
    let space = Arc::new(StateSpace::anonymous(n).unwrap());
    let pi = random_prob_vector(n, &mut rng).unwrap();
    let p = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
    let q = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
    let f = random_function(n, &mut rng);
    let g = random_function(n, &mut rng);
    Instance { pi, p, q, f, g }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reversible_kernels_are_self_adjoint(seed in any::<u64>(), n in 2usize..=6) {
        let s = instance(seed, n);
        let lhs = inner(&s.pi, &s.f, &s.p.apply(&s.g));
        let rhs = inner(&s.pi, &s.p.apply(&s.f), &s.g);
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn adjoint_of_products_reverses_order(seed in any::<u64>(), n in 2usize..=6, len in 1usize..=4) {
        let mut rng = RngStream::new(seed, 1).rng();
        let s = instance(seed, n);
        let space = s.p.space().clone();
        let kernels: Vec<FiniteKernel> =
            (0..len).map(|_| random_reversible_kernel(&space, &s.pi, &mut rng).unwrap()).collect();
        let product = kernels.iter().skip(1).fold(kernels[0].clone(), |acc, k| compose(&acc, k).unwrap());
        let reversed = kernels.iter().rev().skip(1).fold(kernels[len - 1].clone(), |acc, k| compose(&acc, k).unwrap());
        let lhs = inner(&s.pi, &s.f, &product.apply(&s.g));
        let rhs = inner(&s.pi, &reversed.apply(&s.f), &s.g);
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn composition_preserves_invariance(seed in any::<u64>(), n in 2usize..=6) {
        let s = instance(seed, n);
        prop_assert!(compose(&s.p, &s.q).unwrap().invariance_residual(&s.pi) <= 1e-12);
    }

    #[test]
    fn centered_contraction(seed in any::<u64>(), n in 2usize..=6) {
        let s = instance(seed, n);
        let mut rng = RngStream::new(seed, 2).rng();
        for _ in 0..100 {
            let f = FunctionVector::new((0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap();
            let fc = f.centered(&s.pi);
            let norm = inner(&s.pi, &fc, &fc).sqrt();
            let pf = s.p.apply(&fc);
            let ratio = inner(&s.pi, &pf, &pf).sqrt() / norm;
            prop_assert!(ratio <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn peskun_implies_covariance_ordering(seed in any::<u64>(), n in 2usize..=6, a in 0.01f64..0.99) {
        let s = instance(seed, n);
        let (p0, p1) = lazy_pair(&s.p, a).unwrap();
        prop_assert!(off_diagonal_order_check(&p0, &p1, 1e-12).unwrap().holds());
        prop_assert!(covariance_order_check(&p0, &p1, &s.pi, 1e-10).unwrap().holds());
        prop_assert!(detailed_balance_check(&p0, &s.pi, 1e-12).unwrap().holds());
    }

    #[test]
    fn alternating_variance_ordering(seed in any::<u64>(), n in 2usize..=6, a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let s = instance(seed, n);
        let (p0, p1) = lazy_pair(&s.p, a).unwrap();
        let (q0, q1) = lazy_pair(&s.q, b).unwrap();
        let v0 = asvar_alternating(&AlternatingModel::new(p0, q0, s.pi.clone(), s.f.clone()).unwrap()).unwrap();
        let v1 = asvar_alternating(&AlternatingModel::new(p1, q1, s.pi.clone(), s.f.clone()).unwrap()).unwrap();
        prop_assert!(v1.value <= v0.value + 1e-9, "v1 = {}, v0 = {}", v1.value, v0.value);
        prop_assert!(v1.value >= -1e-10);
    }

    #[test]
    fn closed_form_matches_truncated_series(seed in any::<u64>(), n in 2usize..=6) {
        let s = instance(seed, n);
        let m = AlternatingModel::new(s.p, s.q, s.pi, s.f).unwrap();
        let rho = m.spectral_radius().unwrap();
        prop_assume!(rho <= 0.9);
        let exact = asvar_alternating(&m).unwrap().value;
        let series = truncated_autocov_series(&m, 400).unwrap().value;
        prop_assert!((exact - series).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_algorithm_orderings(seed in any::<u64>(), ny in 2usize..=3, nu in 2usize..=3) {
        let m = random_toy(ny, nu, seed, true);
        let pi = m.joint_pi();
        let q = extract_kernel(KernelKind::Freeze, &m).unwrap().kernel;
        let a3 = extract_kernel(KernelKind::RandomRefresh, &m).unwrap().kernel;
        let a2 = extract_kernel(KernelKind::SystematicRefresh, &m).unwrap();
        let ky = marginal_kernel(&a2, &m).unwrap();
        let mut rng = RngStream::new(seed, 3).rng();
        let h = random_function(ny, &mut rng);
        let lifted = FunctionVector::new((0..m.n_joint()).map(|i| h.values()[m.split_index(i).0]).collect()).unwrap();
        let v1 = asvar_homogeneous(&q, &pi, &lifted).unwrap().value;
        let v2 = asvar_homogeneous(&ky, m.pi_star(), &h).unwrap().value;
        let v2_joint = asvar_homogeneous(&a2.kernel, &pi, &lifted).unwrap().value;
        let v3 = asvar_homogeneous(&a3, &pi, &lifted).unwrap().value;
        prop_assert!((v2 - v2_joint).abs() <= 1e-9);
        prop_assert!(v2 <= v1 + 1e-9);
        prop_assert!(v3 <= v1 + 1e-9);
    }

    #[test]
    fn product_symmetry_under_first_coordinate_preservation(seed in any::<u64>(), ny in 2usize..=3, nu in 2usize..=3) {
        let m = random_toy(ny, nu, seed, true);
        let pi = m.joint_pi();
        let q = extract_kernel(KernelKind::Freeze, &m).unwrap().kernel;
        let mut rng = RngStream::new(seed, 4).rng();
        let h = random_function(ny, &mut rng);
        let lifted = FunctionVector::new((0..m.n_joint()).map(|i| h.values()[m.split_index(i).0]).collect()).unwrap();
        for component in [KernelKind::SystematicRefreshComponent, KernelKind::RandomRefreshComponent] {
            let p = extract_kernel(component, &m).unwrap().kernel;
            let pq = asvar_homogeneous(&compose(&p, &q).unwrap(), &pi, &lifted).unwrap().value;
            let qp = asvar_homogeneous(&compose(&q, &p).unwrap(), &pi, &lifted).unwrap().value;
            prop_assert!((pq - qp).abs() <= 1e-9, "{component:?}: {pq} vs {qp}");
        }
    }

    #[test]
    fn freeze_ratio_reciprocity(seed in any::<u64>(), ny in 2usize..=4, nu in 2usize..=3) {
        let m = random_toy(ny, nu, seed, true);
        let mut rng = RngStream::new(seed, 5).rng();
        for _ in 0..50 {
            let (y, u) = (rng.random_range(0..ny), rng.random_range(0..nu));
            let (yn, un) = (rng.random_range(0..ny), rng.random_range(0..nu));
            let a = log_freeze_ratio(&m, &y, &u, &yn, &un, None).unwrap();
            let b = log_freeze_ratio(&m, &yn, &un, &y, &u, None).unwrap();
            prop_assert!((a + b).abs() <= 1e-10);
            let alpha = a.min(0.0).exp();
            prop_assert!((0.0..=1.0).contains(&alpha));
        }
    }
}

#[test]
fn independent_refresh_pair_violates_first_coordinate_condition() {
    // Π then Q0 versus I then Q0: Peskun-ordered components, reversed variances
    use varorder::markov::two_state_q0;
    for eps in [0.1, 0.5, 0.9] {
        let q0 = two_state_q0(eps).unwrap();
        let pi = ProbVector::uniform(2).unwrap();
        let big_pi = FiniteKernel::independent(q0.space().clone(), &pi).unwrap();
        let f = FunctionVector::new(vec![-1.0, 1.0]).unwrap();
        let v0 = asvar_homogeneous(&q0, &pi, &f).unwrap().value;
        let v1 = asvar_homogeneous(&compose(&big_pi, &q0).unwrap(), &pi, &f).unwrap().value;
        assert!((v0 - eps / (2.0 - eps)).abs() <= 1e-12);
        assert!((v1 - 1.0).abs() <= 1e-12);
        assert!(v0 < v1);
    }
}
