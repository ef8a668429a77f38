//! V-geometric ergodicity certificates for finite kernels and a numerical
//! check of the covariance bounds that make alternating chains summable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::spectrum::{centered_spectral_radius, unit_eigenvalue_multiplicity};
use crate::markov::{compose, FiniteKernel, FunctionVector, ProbVector};
use crate::tol;
use crate::variance::{autocovariance_series, AlternatingModel};

fn check_lyapunov(v: &FunctionVector) -> Result<()> {
    if v.values().iter().any(|x| *x < 1.0) {
        return Err(Error::InvalidFunction("V must be at least 1 everywhere".into()));
    }
    Ok(())
}

/// `‖μ‖_V = Σ_x |μ_x| V(x)`.
pub fn v_norm_distance(mu: &DVector<f64>, v: &FunctionVector) -> Result<f64> {
    if mu.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: v.len(), found: mu.len() });
    }
    check_lyapunov(v)?;
    Ok(mu.iter().zip(v.values()).map(|(m, w)| m.abs() * w).sum())
}

/// `sup_x |g(x)| / W(x)`.
pub fn weighted_sup_norm(g: &FunctionVector, w: &[f64]) -> f64 {
    g.values().iter().zip(w).map(|(a, b)| a.abs() / b).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftCheck {
    pub holds: bool,
    pub b: f64,
}

/// Smallest `b ≥ 0` with `PV ≤ λV + b`.
pub fn drift_check(p: &FiniteKernel, v: &FunctionVector, lambda: f64) -> Result<DriftCheck> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} outside (0, 1)")));
    }
    if v.len() != p.size() {
        return Err(Error::DimensionMismatch { expected: p.size(), found: v.len() });
    }
    check_lyapunov(v)?;
    let pv = p.apply(v);
    let b = pv.values().iter().zip(v.values()).map(|(a, w)| a - lambda * w).fold(0.0, f64::max);
    Ok(DriftCheck { holds: b.is_finite(), b })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricBound {
    pub c: f64,
    pub rho: f64,
    pub n_max: usize,
}

/// Distances `‖P^n(x, ·) − π‖_V` for `n = 0..=n_max`, row `n`, column `x`.
/// Powers of `P − Π` are used for `n ≥ 1`, which equal `P^n − Π` exactly and
/// avoid the cancellation floor of subtracting `π` from `P^n`.
fn v_distances(p: &FiniteKernel, pi: &ProbVector, v: &FunctionVector, n_max: usize) -> Vec<DVector<f64>> {
    let n = p.size();
    let w = pi.as_vector();
    let vv = v.as_vector();
    let centered = p.matrix() - DMatrix::from_fn(n, n, |_, j| w[j]);
    let initial = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w[j]);
    let dist = |m: &DMatrix<f64>| {
        DVector::from_fn(n, |x, _| m.row(x).iter().zip(vv.iter()).map(|(a, b)| a.abs() * b).sum())
    };
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(dist(&initial));
    let mut power = centered.clone();
    for _ in 1..=n_max {
        out.push(dist(&power));
        power = &power * &centered;
    }
    out
}

/// Fits `(C, ρ)` with `‖P^n(x, ·) − π‖_V ≤ C ρ^n V(x)` for `n ≤ n_max`:
/// `ρ` is the second-largest eigenvalue modulus plus a fixed margin and `C`
/// the finite-horizon maximum of the ratio.
pub fn geometric_bound_fit(
    p: &FiniteKernel,
    pi: &ProbVector,
    v: &FunctionVector,
    n_max: usize,
) -> Result<GeometricBound> {
    check_lyapunov(v)?;
    p.check_invariant(pi)?;
    let multiplicity = unit_eigenvalue_multiplicity(p, tol::UNIT_EIGENVALUE);
    if multiplicity > 1 {
        return Err(Error::Reducible { multiplicity });
    }
    let modulus = centered_spectral_radius(p, pi);
    if modulus >= 1.0 - tol::UNIT_EIGENVALUE {
        return Err(Error::NotGeometricallyErgodic { modulus });
    }
    let rho = modulus + tol::RHO_MARGIN;
    let mut log_c = f64::NEG_INFINITY;
    for (n, d) in v_distances(p, pi, v, n_max).iter().enumerate() {
        for (x, dist) in d.iter().enumerate() {
            if *dist > 0.0 {
                log_c = log_c.max(dist.ln() - n as f64 * rho.ln() - v.values()[x].ln());
            }
        }
    }
    Ok(GeometricBound { c: log_c.exp(), rho, n_max })
}

/// Checks `‖P^n(x, ·) − π‖_{V^{1/2}} ≤ (2 C ρ^n V(x))^{1/2}` for every state
/// and `n ≤ n_max`; returns the largest ratio of the two sides.
pub fn half_power_ratio(
    p: &FiniteKernel,
    pi: &ProbVector,
    v: &FunctionVector,
    bound: &GeometricBound,
) -> Result<f64> {
    let sqrt_v = FunctionVector::new(v.values().iter().map(|x| x.sqrt()).collect())?;
    let mut worst: f64 = 0.0;
    for (n, d) in v_distances(p, pi, &sqrt_v, bound.n_max).iter().enumerate() {
        for (x, dist) in d.iter().enumerate() {
            if *dist > 0.0 {
                let log_rhs = 0.5 * ((2.0 * bound.c).ln() + n as f64 * bound.rho.ln() + v.values()[x].ln());
                worst = worst.max((dist.ln() - log_rhs).exp());
            }
        }
    }
    Ok(worst)
}

/// A complete V-geometric ergodicity certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub v: Vec<f64>,
    pub lambda: f64,
    pub b: f64,
    pub c: f64,
    pub rho: f64,
    pub n_max: usize,
}

impl DriftCertificate {
    pub fn fit(
        p: &FiniteKernel,
        pi: &ProbVector,
        v: &FunctionVector,
        lambda: f64,
        n_max: usize,
    ) -> Result<Self> {
        let drift = drift_check(p, v, lambda)?;
        let fit = geometric_bound_fit(p, pi, v, n_max)?;
        Ok(Self { v: v.values().to_vec(), lambda, b: drift.b, c: fit.c, rho: fit.rho, n_max })
    }

    /// Re-verifies `PV ≤ λV + b` entrywise.
    pub fn drift_holds(&self, p: &FiniteKernel) -> bool {
        let v = FunctionVector::new(self.v.clone()).expect("finite V");
        let pv = p.apply(&v);
        pv.values().iter().zip(&self.v).all(|(a, w)| *a <= self.lambda * w + self.b + tol::ENTRY)
    }
}

/// Exact covariance checked against its bound at one lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    /// 0 for `cov(f(X_0), f(X_k))`, 1 for `cov(f(X_1), f(X_{1+k}))`.
    pub origin: u8,
    pub lag: usize,
    pub covariance: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    pub certificate: DriftCertificate,
    /// `|f̄|_{V^{1/2}}`.
    pub f_norm: f64,
    /// `|P f̄|_{V^{1/2}}`.
    pub pf_norm: f64,
    pub pi_v: f64,
    pub checks: Vec<CovarianceCheck>,
    pub holds: bool,
    pub max_ratio: f64,
}

/// Default horizon of the covariance checks (`n ≤ 50`).
pub const COVARIANCE_HORIZON: usize = 50;

/// Fits a certificate for `PQ` and checks every covariance of the
/// alternating chain `X_0 →P X_1 →Q X_2 ...` up to `n ≤ 50` against
/// `c² (2 C ρ^m)^{1/2} πV`, where `c = max(|f̄|_{V^{1/2}}, |P f̄|_{V^{1/2}})`
/// rescales `f` to unit norms. The exponent `m` is `⌊k/2⌋` for lags `k` from
/// `X_0` and `⌊(k−1)/2⌋` for lags from `X_1`.
pub fn summability_certificate(
    p: &FiniteKernel,
    q: &FiniteKernel,
    pi: &ProbVector,
    f: &FunctionVector,
    v: &FunctionVector,
    lambda: f64,
) -> Result<SummabilityReport> {
    let pq = compose(p, q)?;
    let certificate = DriftCertificate::fit(&pq, pi, v, lambda, 200)?;
    let sqrt_v: Vec<f64> = v.values().iter().map(|x| x.sqrt()).collect();
    let fc = f.centered(pi);
    let f_norm = weighted_sup_norm(&fc, &sqrt_v);
    let pf_norm = weighted_sup_norm(&p.apply(&fc), &sqrt_v);
    let c2 = f_norm.max(pf_norm).powi(2);
    let pi_v = pi.expect(v);
    let model = AlternatingModel::new(p.clone(), q.clone(), pi.clone(), f.clone())?;
    let lags = 2 * COVARIANCE_HORIZON + 1;
    let (from0, from1) = autocovariance_series(&model, lags);
    let bound_at = |m: usize| c2 * (2.0 * certificate.c * certificate.rho.powi(m as i32)).sqrt() * pi_v;
    let mut checks = Vec::with_capacity(2 * lags);
    for k in 1..=lags {
        checks.push(CovarianceCheck { origin: 0, lag: k, covariance: from0[k - 1], bound: bound_at(k / 2) });
        checks.push(CovarianceCheck {
            origin: 1,
            lag: k,
            covariance: from1[k - 1],
            bound: bound_at((k - 1) / 2),
        });
    }
    let holds = checks.iter().all(|c| c.covariance.abs() <= c.bound + tol::ENTRY);
    let max_ratio =
        checks.iter().filter(|c| c.bound > 0.0).map(|c| c.covariance.abs() / c.bound).fold(0.0, f64::max);
    Ok(SummabilityReport { certificate, f_norm, pf_norm, pi_v, checks, holds, max_ratio })
}
