//! Asymptotic variances: closed forms for homogeneous and alternating finite
//! chains, a truncated-series oracle, and trace-based estimators.
//!
//! For a chain started at stationarity, `v(f) = lim n⁻¹ Var(Σ_{k<n} f(X_k))`.
//! On finite spaces the autocovariance series are geometric in the centered
//! operator, so each one is resolved by a single linear solve on the
//! π-centered subspace. The constant direction is deflated by adding `1πᵀ`,
//! which leaves the solve well posed whenever 1 is a simple eigenvalue.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::spectrum::{centered_eigenvalues, centered_spectral_radius};
use crate::markov::{compose, inner, FiniteKernel, FunctionVector, ProbVector};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    TruncatedSeries,
    BatchMeans,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::TruncatedSeries => "truncated_series",
            Method::BatchMeans => "batch_means",
        }
    }
}

/// An exact or estimated asymptotic variance with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub value: f64,
    pub method: Method,
    pub diagnostics: BTreeMap<String, f64>,
}

impl VarianceReport {
    fn new(value: f64, method: Method, diagnostics: &[(&str, f64)]) -> Self {
        Self { value, method, diagnostics: diagnostics.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    /// Standard error when the method provides one (batch means only).
    pub fn stderr(&self) -> Option<f64> {
        self.diagnostic("standard_error")
    }
}

/// A chain alternating `P` (even steps) and `Q` (odd steps), started at `pi`.
#[derive(Debug, Clone)]
pub struct AlternatingModel {
    p: FiniteKernel,
    q: FiniteKernel,
    pi: ProbVector,
    f: FunctionVector,
}

impl AlternatingModel {
    pub fn new(p: FiniteKernel, q: FiniteKernel, pi: ProbVector, f: FunctionVector) -> Result<Self> {
        if !p.same_space(&q) {
            return Err(Error::SpaceMismatch);
        }
        if f.len() != p.size() {
            return Err(Error::DimensionMismatch { expected: p.size(), found: f.len() });
        }
        p.check_invariant(&pi)?;
        q.check_invariant(&pi)?;
        Ok(Self { p, q, pi, f })
    }

    /// The homogeneous chain `P` written as an alternation of `P` with itself.
    pub fn homogeneous(p: FiniteKernel, pi: ProbVector, f: FunctionVector) -> Result<Self> {
        Self::new(p.clone(), p, pi, f)
    }

    pub fn p(&self) -> &FiniteKernel {
        &self.p
    }

    pub fn q(&self) -> &FiniteKernel {
        &self.q
    }

    pub fn pi(&self) -> &ProbVector {
        &self.pi
    }

    pub fn f(&self) -> &FunctionVector {
        &self.f
    }

    /// Centered spectral radius of `PQ` (equal to that of `QP`).
    pub fn spectral_radius(&self) -> Result<f64> {
        let pq = compose(&self.p, &self.q)?;
        let qp = compose(&self.q, &self.p)?;
        Ok(centered_spectral_radius(&pq, &self.pi).max(centered_spectral_radius(&qp, &self.pi)))
    }
}

/// Solves `(I − A) g = b` for π-centered `b`, returning the centered
/// solution and the residual `‖(I − A) g − b‖∞`.
fn centered_solve(a: &FiniteKernel, pi: &ProbVector, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = a.size();
    let w = pi.weights();
    let system = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - a.entry(i, j) + w[j]
    });
    let g = system.clone().lu().solve(b).ok_or(Error::StationaryNotUnique { eigenvalue: 1.0 })?;
    let lhs = &g - a.matrix() * &g;
    let residual = (lhs - b).amax();
    Ok((g, residual))
}

fn unit_eigenvalue_on_centered(p: &FiniteKernel, pi: &ProbVector) -> Option<f64> {
    centered_eigenvalues(p, pi)
        .into_iter()
        .find(|z| (z.re - 1.0).abs() <= tol::UNIT_EIGENVALUE && z.im.abs() <= tol::UNIT_EIGENVALUE)
        .map(|z| z.re)
}

/// `v(f, P) = πf̄² + 2 Σ_{k≥1} ⟨f̄, P^k f̄⟩`, computed as
/// `πf̄² + 2 ⟨f̄, (I − P)⁻¹ P f̄⟩` on the centered subspace.
///
/// Only a unit eigenvalue on the centered subspace is an error; periodic
/// chains (eigenvalue −1) get the Abel-summed value, which is the limit of
/// the normalized partial-sum variances.
pub fn asvar_homogeneous(p: &FiniteKernel, pi: &ProbVector, f: &FunctionVector) -> Result<VarianceReport> {
    if f.len() != p.size() {
        return Err(Error::DimensionMismatch { expected: p.size(), found: f.len() });
    }
    p.check_invariant(pi)?;
    if let Some(eigenvalue) = unit_eigenvalue_on_centered(p, pi) {
        return Err(Error::StationaryNotUnique { eigenvalue });
    }
    let fc = f.centered(pi);
    let pf = p.apply(&fc);
    let (g, residual) = centered_solve(p, pi, pf.as_vector())?;
    let g = FunctionVector::from_vector(g);
    let value = inner(pi, &fc, &fc) + 2.0 * inner(pi, &fc, &g);
    Ok(VarianceReport::new(
        value,
        Method::ClosedForm,
        &[("centered_spectral_radius", centered_spectral_radius(p, pi)), ("solve_residual", residual)],
    ))
}

/// Asymptotic variance of the alternating chain `X0 →P X1 →Q X2 →P ...`:
///
/// `πf̄² + Σ_{k≥1} cov(f(X0), f(Xk)) + Σ_{k≥1} cov(f(X1), f(X_{k+1}))`
///
/// with each covariance series split into even and odd lags and summed in
/// closed form.
pub fn asvar_alternating(m: &AlternatingModel) -> Result<VarianceReport> {
    let spectral_radius = m.spectral_radius()?;
    if spectral_radius >= 1.0 - tol::UNIT_EIGENVALUE {
        return Err(Error::SummabilityFails { spectral_radius });
    }
    let pi = &m.pi;
    let fc = m.f.centered(pi);
    let series = |first: &FiniteKernel, second: &FiniteKernel| -> Result<(f64, f64)> {
        let two_step = compose(first, second)?;
        let rhs = two_step.apply(&fc).as_vector() + first.apply(&fc).as_vector();
        let (g, residual) = centered_solve(&two_step, pi, &rhs)?;
        Ok((inner(pi, &fc, &FunctionVector::from_vector(g)), residual))
    };
    let (from_even, r0) = series(&m.p, &m.q)?;
    let (from_odd, r1) = series(&m.q, &m.p)?;
    let value = inner(pi, &fc, &fc) + from_even + from_odd;
    Ok(VarianceReport::new(
        value,
        Method::ClosedForm,
        &[("centered_spectral_radius", spectral_radius), ("solve_residual", r0.max(r1))],
    ))
}

/// Autocovariances `cov(f(X_start), f(X_{start+k}))` for `k = 1..=lags`,
/// where the chain applies `first` then `second` alternately from `X_start`.
fn alternating_autocovs(
    first: &FiniteKernel,
    second: &FiniteKernel,
    pi: &ProbVector,
    fc: &FunctionVector,
    lags: usize,
) -> Vec<f64> {
    // Row measure ν_k = (π ∘ f̄) K_1 ⋯ K_k, so cov at lag k is ν_k · f̄.
    let mut nu = pi.as_vector().component_mul(fc.as_vector());
    (1..=lags)
        .map(|k| {
            let step = if k % 2 == 1 { first } else { second };
            nu = step.push_forward(&nu);
            nu.dot(fc.as_vector())
        })
        .collect()
}

/// Exact autocovariances of the stationary alternating chain:
/// `cov(f(X_0), f(X_k))` and `cov(f(X_1), f(X_{1+k}))` for `k = 1..=lags`.
pub fn autocovariance_series(m: &AlternatingModel, lags: usize) -> (Vec<f64>, Vec<f64>) {
    let fc = m.f.centered(&m.pi);
    (alternating_autocovs(&m.p, &m.q, &m.pi, &fc, lags), alternating_autocovs(&m.q, &m.p, &m.pi, &fc, lags))
}

/// Covariance sum truncated at lag `k_max`; serves as an oracle
/// for [`asvar_alternating`] that never forms an inverse.
pub fn truncated_autocov_series(m: &AlternatingModel, k_max: usize) -> Result<VarianceReport> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("truncation length must be at least 1".into()));
    }
    let pi = &m.pi;
    let fc = m.f.centered(pi);
    let var = inner(pi, &fc, &fc);
    let c0: f64 = alternating_autocovs(&m.p, &m.q, pi, &fc, k_max).iter().sum();
    let c1: f64 = alternating_autocovs(&m.q, &m.p, pi, &fc, k_max).iter().sum();
    let rho = m.spectral_radius()?;
    let remainder_bound =
        if rho < 1.0 { 4.0 * rho.powi(k_max as i32) * var / (1.0 - rho) } else { f64::INFINITY };
    Ok(VarianceReport::new(
        var + c0 + c1,
        Method::TruncatedSeries,
        &[
            ("truncation_length", k_max as f64),
            ("remainder_bound", remainder_bound),
            ("spectral_radius", rho),
        ],
    ))
}

/// Exact `Var(Σ_{k<n} f(X_k))` for `n = 1..=n_max` along the alternating
/// chain started at stationarity.
pub fn partial_sum_variances(m: &AlternatingModel, n_max: usize) -> Vec<f64> {
    let pi = &m.pi;
    let fc = m.f.centered(pi);
    let var = inner(pi, &fc, &fc);
    let lags = n_max.saturating_sub(1);
    let even = alternating_autocovs(&m.p, &m.q, pi, &fc, lags);
    let odd = alternating_autocovs(&m.q, &m.p, pi, &fc, lags);
    let mut out = Vec::with_capacity(n_max);
    let mut total = 0.0;
    for n in 0..n_max {
        // add X_n: its own variance plus twice its covariance with X_0..X_{n-1}
        let cross: f64 = (0..n)
            .map(|i| {
                let lag = n - i - 1;
                if i % 2 == 0 {
                    even[lag]
                } else {
                    odd[lag]
                }
            })
            .sum();
        total += var + 2.0 * cross;
        out.push(total);
    }
    out
}

/// Batch-means estimate of the asymptotic variance from a single trace.
///
/// The trace is cut into `batch_count` equal contiguous batches (the
/// remainder is dropped) and the estimate is `m · s²` where `m` is the
/// batch length and `s²` the unbiased sample variance of the batch means.
/// `standard_error` is the chi-square approximation `v̂ √(2/(b−1))`.
pub fn batch_means_variance(trace: &[f64], batch_count: usize) -> Result<VarianceReport> {
    if batch_count < 2 {
        return Err(Error::InvalidParameter("batch means need at least 2 batches".into()));
    }
    if trace.len() < 2 * batch_count {
        return Err(Error::TraceTooShort { len: trace.len(), needed: 2 * batch_count });
    }
    let len = trace.len() / batch_count;
    let means: Vec<f64> =
        trace.chunks_exact(len).take(batch_count).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let grand = means.iter().sum::<f64>() / batch_count as f64;
    let ss: f64 = means.iter().map(|m| (m - grand).powi(2)).sum();
    let b = batch_count as f64;
    let value = len as f64 * ss / (b - 1.0);
    Ok(VarianceReport::new(
        value,
        Method::BatchMeans,
        &[
            ("batch_count", b),
            ("batch_length", len as f64),
            ("standard_error", value * (2.0 / (b - 1.0)).sqrt()),
            ("mean_standard_error", (value / (b * len as f64)).sqrt()),
        ],
    ))
}

/// Sample covariance between `trace[..n−lag]` and `trace[lag..]`, each
/// segment centered at its own mean and normalized by `n − lag`.
pub fn empirical_autocov(trace: &[f64], lag: usize) -> Result<f64> {
    let n = trace.len();
    if lag >= n {
        return Err(Error::LagOutOfRange { lag, len: n });
    }
    let m = n - lag;
    let head = &trace[..m];
    let tail = &trace[lag..];
    let mh = head.iter().sum::<f64>() / m as f64;
    let mt = tail.iter().sum::<f64>() / m as f64;
    Ok(head.iter().zip(tail).map(|(a, b)| (a - mh) * (b - mt)).sum::<f64>() / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{
        flip_kernel, lazy_pair, random_function, random_prob_vector, random_reversible_kernel, two_state_q0,
        variance, StateSpace,
    };
    use crate::sampler::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::RngCore;
    use std::sync::Arc;

    fn ident() -> FunctionVector {
        FunctionVector::new(vec![-1.0, 1.0]).unwrap()
    }

    fn uniform2() -> ProbVector {
        ProbVector::uniform(2).unwrap()
    }

    #[test]
    fn iid_kernel_gives_plain_variance() {
        let pi = ProbVector::new(vec![0.1, 0.6, 0.3]).unwrap();
        let space = Arc::new(StateSpace::anonymous(3).unwrap());
        let big_pi = FiniteKernel::independent(space, &pi).unwrap();
        let f = FunctionVector::new(vec![2.0, -1.0, 5.0]).unwrap();
        let v = asvar_homogeneous(&big_pi, &pi, &f).unwrap();
        assert_eq!(v.method, Method::ClosedForm);
        assert_abs_diff_eq!(v.value, variance(&pi, &f), epsilon = 1e-13);
    }

    #[test]
    fn q0_closed_form_matches_ratio() {
        for eps in [0.1, 0.5, 0.9] {
            let v = asvar_homogeneous(&two_state_q0(eps).unwrap(), &uniform2(), &ident()).unwrap();
            assert_abs_diff_eq!(v.value, eps / (2.0 - eps), epsilon = 1e-12);
        }
    }

    #[test]
    fn flip_kernel_closed_form_is_zero() {
        let v = asvar_homogeneous(&flip_kernel(), &uniform2(), &ident()).unwrap();
        assert_abs_diff_eq!(v.value, 0.0, epsilon = 1e-14);
        // cross-check: partial sums alternate 1, 0, 1, 0 in variance
        let m = AlternatingModel::homogeneous(flip_kernel(), uniform2(), ident()).unwrap();
        let sums = partial_sum_variances(&m, 6);
        for (n, s) in sums.iter().enumerate() {
            assert_abs_diff_eq!(*s, if n % 2 == 0 { 1.0 } else { 0.0 }, epsilon = 1e-14);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let space = Arc::new(StateSpace::anonymous(2).unwrap());
        let eye = FiniteKernel::identity(space);
        assert!(matches!(
            asvar_homogeneous(&eye, &uniform2(), &ident()),
            Err(Error::StationaryNotUnique { .. })
        ));
    }

    #[test]
    fn non_invariant_pi_is_rejected() {
        let pi = ProbVector::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            asvar_homogeneous(&two_state_q0(0.5).unwrap(), &pi, &ident()),
            Err(Error::NotInvariant { .. })
        ));
    }

    #[test]
    fn alternating_with_equal_kernels_is_homogeneous() {
        let mut rng = RngStream::new(21, 0).rng();
        let pi = random_prob_vector(4, &mut rng).unwrap();
        let space = Arc::new(StateSpace::anonymous(4).unwrap());
        let p = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
        let f = random_function(4, &mut rng);
        let hom = asvar_homogeneous(&p, &pi, &f).unwrap().value;
        let alt = asvar_alternating(&AlternatingModel::homogeneous(p, pi, f).unwrap()).unwrap().value;
        assert_abs_diff_eq!(hom, alt, epsilon = 1e-10);
    }

    #[test]
    fn alternating_with_independent_first_kernel() {
        let mut rng = RngStream::new(22, 0).rng();
        let pi = random_prob_vector(5, &mut rng).unwrap();
        let space = Arc::new(StateSpace::anonymous(5).unwrap());
        let q = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
        let big_pi = FiniteKernel::independent(space, &pi).unwrap();
        let f = random_function(5, &mut rng);
        let fc = f.centered(&pi);
        let expected = variance(&pi, &f) + crate::markov::lag_one_autocov(&q, &pi, &fc);
        let m = AlternatingModel::new(big_pi, q, pi, f).unwrap();
        assert_abs_diff_eq!(asvar_alternating(&m).unwrap().value, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(truncated_autocov_series(&m, 200).unwrap().value, expected, epsilon = 1e-12);
    }

    #[test]
    fn peskun_pair_reverses_alternating_ordering() {
        // (I, Q0) versus (Π, Q0); oracle first, then the closed form.
        let q0 = two_state_q0(0.5).unwrap();
        let space = q0.space().clone();
        let eye = FiniteKernel::identity(space.clone());
        let big_pi = FiniteKernel::independent(space, &uniform2()).unwrap();
        let m0 = AlternatingModel::new(eye, q0.clone(), uniform2(), ident()).unwrap();
        let m1 = AlternatingModel::new(big_pi, q0, uniform2(), ident()).unwrap();
        let o0 = truncated_autocov_series(&m0, 200).unwrap().value;
        let o1 = truncated_autocov_series(&m1, 200).unwrap().value;
        let v0 = asvar_alternating(&m0).unwrap().value;
        let v1 = asvar_alternating(&m1).unwrap().value;
        assert_abs_diff_eq!(o0, v0, epsilon = 1e-10);
        assert_abs_diff_eq!(o1, v1, epsilon = 1e-10);
        assert!(v1 <= v0);
        // identity first kernel duplicates each Q0 state: twice the product-chain value
        assert_abs_diff_eq!(v0, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn truncated_series_examples() {
        let space = Arc::new(StateSpace::anonymous(2).unwrap());
        let big_pi = FiniteKernel::independent(space, &uniform2()).unwrap();
        let iid = AlternatingModel::homogeneous(big_pi, uniform2(), ident()).unwrap();
        let t = truncated_autocov_series(&iid, 1).unwrap();
        assert_eq!(t.method, Method::TruncatedSeries);
        assert_abs_diff_eq!(t.value, 1.0, epsilon = 1e-15);
        assert!(truncated_autocov_series(&iid, 0).is_err());

        // product chain P0Q0 = Q0 seen as a homogeneous alternation
        let q0 = AlternatingModel::homogeneous(two_state_q0(0.5).unwrap(), uniform2(), ident()).unwrap();
        let t = truncated_autocov_series(&q0, 200).unwrap();
        assert_abs_diff_eq!(t.value, 1.0 / 3.0, epsilon = 1e-10);
        assert!(t.diagnostic("remainder_bound").unwrap() < 1e-10);
    }

    #[test]
    fn flip_alternation_breaks_summability() {
        let m = AlternatingModel::new(flip_kernel(), flip_kernel(), uniform2(), ident()).unwrap();
        match asvar_alternating(&m) {
            Err(Error::SummabilityFails { spectral_radius }) => {
                assert_abs_diff_eq!(spectral_radius, 1.0, epsilon = 1e-12)
            }
            other => panic!("expected summability failure, got {other:?}"),
        }
        let t = truncated_autocov_series(&m, 50).unwrap();
        assert!(t.diagnostic("remainder_bound").unwrap().is_infinite());
        let sums = partial_sum_variances(&m, 200);
        for (i, s) in sums.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!(s / n <= 1.0 / n + 1e-15);
        }
    }

    #[test]
    fn partial_sums_match_asymptotic_rate() {
        let q0 = two_state_q0(0.3).unwrap();
        let eye = FiniteKernel::identity(q0.space().clone());
        let m = AlternatingModel::new(eye, q0, uniform2(), ident()).unwrap();
        let sums = partial_sum_variances(&m, 4000);
        let v = asvar_alternating(&m).unwrap().value;
        assert_abs_diff_eq!(sums[3999] / 4000.0, v, epsilon = 2e-3);
    }

    #[test]
    fn batch_means_edge_cases() {
        let constant = vec![3.0; 1000];
        assert_abs_diff_eq!(batch_means_variance(&constant, 10).unwrap().value, 0.0);
        assert!(matches!(batch_means_variance(&constant[..15], 10), Err(Error::TraceTooShort { .. })));
        assert!(batch_means_variance(&constant, 1).is_err());
        let r = batch_means_variance(&constant, 10).unwrap();
        assert_eq!(r.diagnostic("batch_length"), Some(100.0));
    }

    #[test]
    fn batch_means_iid_normal() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = RngStream::new(99, 0).rng();
        let trace: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = batch_means_variance(&trace, 100).unwrap();
        assert!((r.value - 1.0).abs() < 0.15, "estimate {}", r.value);
    }

    #[test]
    fn empirical_autocov_basics() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(empirical_autocov(&t, 0).unwrap(), 1.25);
        assert!(empirical_autocov(&t, 4).is_err());
        let mut rng = RngStream::new(5, 5).rng();
        let iid: Vec<f64> = (0..200_000).map(|_| (rng.next_u32() % 2) as f64).collect();
        assert!(empirical_autocov(&iid, 1).unwrap().abs() < 0.01);
    }

    #[test]
    fn lazy_pairs_respect_ordering_small_sample() {
        let mut rng = RngStream::new(7, 0).rng();
        for _ in 0..20 {
            let n = 2 + (rng.next_u32() % 5) as usize;
            let space = Arc::new(StateSpace::anonymous(n).unwrap());
            let pi = random_prob_vector(n, &mut rng).unwrap();
            let p = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
            let q = random_reversible_kernel(&space, &pi, &mut rng).unwrap();
            let f = random_function(n, &mut rng);
            let (p0, p1) = lazy_pair(&p, 0.4).unwrap();
            let (q0, q1) = lazy_pair(&q, 0.2).unwrap();
            let v0 =
                asvar_alternating(&AlternatingModel::new(p0, q0, pi.clone(), f.clone()).unwrap()).unwrap();
            let v1 = asvar_alternating(&AlternatingModel::new(p1, q1, pi, f).unwrap()).unwrap();
            assert!(v1.value <= v0.value + 1e-9);
        }
    }
}
