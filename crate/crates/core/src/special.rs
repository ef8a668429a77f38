//! Randomized MCMC with a deterministic involution, and generalized
//! multiple-try Metropolis together with its systematic-refresh embedding.

use std::cell::RefCell;
use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Factor, Result};
use crate::exactify::FiniteAugmentedModel;
use crate::markov::{FiniteKernel, ProbVector, StateSpace};
use crate::sampler::{
    accept_log_ratio, denominator, generic_rn_mh_step, log_normal, numerator, sample_index, AcceptCounts,
    Stepper, Transition,
};

/// Smooth involution `f` on `ℝ^d` applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Involution {
    Negate,
    ReflectAbout {
        c: f64,
    },
    /// `u ↦ 1/u`, defined off zero.
    Reciprocal,
}

impl Involution {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .map(|x| match self {
                Involution::Negate => -x,
                Involution::ReflectAbout { c } => 2.0 * c - x,
                Involution::Reciprocal => 1.0 / x,
            })
            .collect()
    }

    /// `log |det ∂f/∂u (u)|`.
    pub fn log_jacobian(&self, u: &[f64]) -> f64 {
        match self {
            Involution::Negate | Involution::ReflectAbout { .. } => 0.0,
            Involution::Reciprocal => -2.0 * u.iter().map(|x| x.abs().ln()).sum::<f64>(),
        }
    }
}

/// Ingredients of randomized MCMC: a target, a proposal `Ř`, an auxiliary
/// proposal `Š(y, ŷ; ·)` and an involution on the auxiliary space.
pub trait RmcmcModel {
    type Y: Clone + Debug + PartialEq;

    fn log_pi_star(&self, y: &Self::Y) -> f64;
    fn sample_r_check(&self, y: &Self::Y, rng: &mut dyn RngCore) -> Result<Self::Y>;
    fn log_r_check(&self, y: &Self::Y, y_new: &Self::Y) -> f64;
    fn sample_s_check(&self, y: &Self::Y, y_new: &Self::Y, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
    fn log_s_check(&self, y: &Self::Y, y_new: &Self::Y, u: &[f64]) -> f64;
    fn involution(&self) -> Involution;
}

/// Unclamped `log γ(y, u, ŷ)` with
/// `γ = π*(ŷ) ř(ŷ, y) š(ŷ, y; f(u)) |∂f/∂u(u)| / π*(y) ř(y, ŷ) š(y, ŷ; u)`.
pub fn rmcmc_log_ratio<M: RmcmcModel>(m: &M, y: &M::Y, u: &[f64], y_new: &M::Y) -> Result<f64> {
    let f = m.involution();
    let cur = denominator(Factor::TargetCurrent, m.log_pi_star(y))?;
    let fwd_y = denominator(Factor::ForwardY, m.log_r_check(y, y_new))?;
    let fwd_u = denominator(Factor::ForwardU, m.log_s_check(y, y_new, u))?;
    let jac = denominator(Factor::Jacobian, f.log_jacobian(u))?;
    let prop = numerator(Factor::TargetProposed, m.log_pi_star(y_new))?;
    let rev_y = numerator(Factor::ReverseY, m.log_r_check(y_new, y))?;
    let rev_u = numerator(Factor::ReverseU, m.log_s_check(y_new, y, &f.apply(u)))?;
    let num = prop + rev_y + rev_u;
    if num == f64::NEG_INFINITY {
        return Ok(num);
    }
    Ok(num + jac - cur - fwd_y - fwd_u)
}

/// One r-MCMC step: `ŷ ~ Ř(y, ·)`, then `u ~ Š(y, ŷ; ·)`, accept with `1 ∧ γ`.
/// The acceptance goes through [`generic_rn_mh_step`] with `γ` as the
/// Radon-Nikodym derivative.
pub fn rmcmc_step<M: RmcmcModel>(
    m: &M,
    y: &M::Y,
    counts: &mut AcceptCounts,
    rng: &mut dyn RngCore,
) -> Result<Transition<M::Y>> {
    let aux: RefCell<Option<Vec<f64>>> = RefCell::new(None);
    let mut propose = |y: &M::Y, rng: &mut dyn RngCore| -> Result<M::Y> {
        let y_new = m.sample_r_check(y, rng)?;
        *aux.borrow_mut() = Some(m.sample_s_check(y, &y_new, rng)?);
        Ok(y_new)
    };
    let log_rn = |y: &M::Y, y_new: &M::Y| -> Result<f64> {
        let u = aux.borrow();
        rmcmc_log_ratio(m, y, u.as_deref().expect("auxiliary drawn by the proposal"), y_new)
    };
    generic_rn_mh_step(&mut propose, &log_rn, y, counts, rng)
}

/// [`rmcmc_step`] as a [`Stepper`].
pub struct RmcmcSampler<'a, M>(pub &'a M);

impl<M: RmcmcModel> Stepper for RmcmcSampler<'_, M> {
    type State = M::Y;

    fn name(&self) -> &str {
        "rmcmc"
    }

    fn step(
        &self,
        state: &M::Y,
        counts: &mut AcceptCounts,
        rng: &mut dyn RngCore,
    ) -> Result<Transition<M::Y>> {
        rmcmc_step(self.0, state, counts, rng)
    }
}

/// Gaussian target `N(mean, sd²)` with random-walk `Ř` and
/// `Š(y, ŷ; ·) = N(κ(y + ŷ), 1)^{⊗d}`.
#[derive(Debug, Clone)]
pub struct GaussianRmcmc {
    pub mean: f64,
    pub sd: f64,
    pub step: f64,
    pub kappa: f64,
    pub dim: usize,
    pub involution: Involution,
}

impl GaussianRmcmc {
    pub fn new(mean: f64, sd: f64, step: f64, involution: Involution) -> Result<Self> {
        if !(sd > 0.0 && step > 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        Ok(Self { mean, sd, step, kappa: 0.3, dim: 1, involution })
    }
}

impl RmcmcModel for GaussianRmcmc {
    type Y = f64;

    fn log_pi_star(&self, y: &f64) -> f64 {
        log_normal(*y, self.mean, self.sd)
    }

    fn sample_r_check(&self, y: &f64, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(y + self.step
            * <rand_distr::StandardNormal as Distribution<f64>>::sample(&rand_distr::StandardNormal, rng))
    }

    fn log_r_check(&self, y: &f64, y_new: &f64) -> f64 {
        log_normal(*y_new, *y, self.step)
    }

    fn sample_s_check(&self, y: &f64, y_new: &f64, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let normal =
            Normal::new(self.kappa * (y + y_new), 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok((0..self.dim).map(|_| normal.sample(rng)).collect())
    }

    fn log_s_check(&self, y: &f64, y_new: &f64, u: &[f64]) -> f64 {
        u.iter().map(|x| log_normal(*x, self.kappa * (y + y_new), 1.0)).sum()
    }

    fn involution(&self) -> Involution {
        self.involution
    }
}

/// Selection-weight families for GMTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaFamily {
    /// `ω(y, v) = 1`.
    Uniform,
    /// `ω(y, v) = ř(y, v)`.
    Proposal,
    /// `ω(y, v) = π*(v)`.
    Target,
}

/// Ingredients of generalized multiple-try Metropolis.
pub trait GmtmModel {
    type Y: Clone + Debug + PartialEq;

    fn tries(&self) -> usize;
    fn log_pi_star(&self, y: &Self::Y) -> f64;
    fn sample_r_check(&self, y: &Self::Y, rng: &mut dyn RngCore) -> Result<Self::Y>;
    fn log_r_check(&self, y: &Self::Y, v: &Self::Y) -> f64;
    /// Selection weight `ω(y, v) ≥ 0`.
    fn omega(&self, y: &Self::Y, v: &Self::Y) -> f64;
}

/// Categorical draw proportional to `weights`.
pub fn select_index(weights: &[f64], rng: &mut dyn RngCore) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::ZeroSelectionWeights);
    }
    Ok(sample_index(weights.iter().map(|w| w / total), rng))
}

/// Unclamped log of
/// `π*(ŷ) ř(ŷ, y) ω(ŷ, y) Σ_k ω(y, v_k) / π*(y) ř(y, ŷ) ω(y, ŷ) Σ_k ω(ŷ, v̂_k)`,
/// where `candidates` are all `n` forward tries (including `ŷ`) and
/// `reverse` all `n` reverse tries (including `y`).
pub fn gmtm_log_ratio<M: GmtmModel>(
    m: &M,
    y: &M::Y,
    candidates: &[M::Y],
    y_new: &M::Y,
    reverse: &[M::Y],
) -> Result<f64> {
    let forward_sum: f64 = candidates.iter().map(|v| m.omega(y, v)).sum();
    let reverse_sum: f64 = reverse.iter().map(|v| m.omega(y_new, v)).sum();
    let cur = denominator(Factor::TargetCurrent, m.log_pi_star(y))?;
    let fwd = denominator(Factor::ForwardY, m.log_r_check(y, y_new))?;
    let w_fwd = denominator(Factor::CandidateWeight, m.omega(y, y_new).ln())?;
    let rev_sum = denominator(Factor::ReverseU, reverse_sum.ln())?;
    let prop = numerator(Factor::TargetProposed, m.log_pi_star(y_new))?;
    let rev = numerator(Factor::ReverseY, m.log_r_check(y_new, y))?;
    let w_rev = numerator(Factor::CurrentWeight, m.omega(y_new, y).ln())?;
    let num = prop + rev + w_rev + forward_sum.ln();
    if num == f64::NEG_INFINITY {
        return Ok(num);
    }
    Ok(num - cur - fwd - w_fwd - rev_sum)
}

/// One GMTM step: `n` tries from `Ř(y, ·)`, selection `∝ ω(y, v_j)`, `n − 1`
/// reverse tries from `Ř(ŷ, ·)` completed by `y`.
pub fn gmtm_step<M: GmtmModel>(
    m: &M,
    y: &M::Y,
    counts: &mut AcceptCounts,
    rng: &mut dyn RngCore,
) -> Result<Transition<M::Y>> {
    let n = m.tries();
    if n == 0 {
        return Err(Error::InvalidParameter("GMTM needs at least one try".into()));
    }
    let candidates = (0..n).map(|_| m.sample_r_check(y, rng)).collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = candidates.iter().map(|v| m.omega(y, v)).collect();
    let j = select_index(&weights, rng)?;
    let y_new = candidates[j].clone();
    let mut reverse = (0..n - 1).map(|_| m.sample_r_check(&y_new, rng)).collect::<Result<Vec<_>>>()?;
    reverse.push(y.clone());
    let lr = gmtm_log_ratio(m, y, &candidates, &y_new, &reverse)?;
    let accepted = accept_log_ratio(lr, rng);
    counts.record("move", accepted);
    Ok(Transition { state: if accepted { y_new } else { y.clone() }, accepted })
}

/// [`gmtm_step`] as a [`Stepper`].
pub struct GmtmSampler<'a, M>(pub &'a M);

impl<M: GmtmModel> Stepper for GmtmSampler<'_, M> {
    type State = M::Y;

    fn name(&self) -> &str {
        "gmtm"
    }

    fn step(
        &self,
        state: &M::Y,
        counts: &mut AcceptCounts,
        rng: &mut dyn RngCore,
    ) -> Result<Transition<M::Y>> {
        gmtm_step(self.0, state, counts, rng)
    }
}

/// GMTM on a real line with a Gaussian target and random-walk tries.
#[derive(Debug, Clone)]
pub struct GaussianGmtm {
    pub mean: f64,
    pub sd: f64,
    pub step: f64,
    pub tries: usize,
    pub omega: OmegaFamily,
}

impl GmtmModel for GaussianGmtm {
    type Y = f64;

    fn tries(&self) -> usize {
        self.tries
    }

    fn log_pi_star(&self, y: &f64) -> f64 {
        log_normal(*y, self.mean, self.sd)
    }

    fn sample_r_check(&self, y: &f64, rng: &mut dyn RngCore) -> Result<f64> {
        let normal = Normal::new(*y, self.step).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(normal.sample(rng))
    }

    fn log_r_check(&self, y: &f64, v: &f64) -> f64 {
        log_normal(*v, *y, self.step)
    }

    fn omega(&self, y: &f64, v: &f64) -> f64 {
        match self.omega {
            OmegaFamily::Uniform => 1.0,
            OmegaFamily::Proposal => self.log_r_check(y, v).exp(),
            OmegaFamily::Target => self.log_pi_star(v).exp(),
        }
    }
}

/// GMTM on a finite space.
#[derive(Debug, Clone)]
pub struct FiniteGmtm {
    pub pi_star: ProbVector,
    /// `Ř`, row-stochastic and strictly positive.
    pub r_check: DMatrix<f64>,
    pub omega: OmegaFamily,
    pub tries: usize,
}

impl FiniteGmtm {
    pub fn new(pi_star: ProbVector, r_check: DMatrix<f64>, omega: OmegaFamily, tries: usize) -> Result<Self> {
        let n = pi_star.len();
        if r_check.nrows() != n || r_check.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n * n, found: r_check.len() });
        }
        if r_check.iter().any(|v| v.is_nan() || *v <= 0.0) || !pi_star.is_strictly_positive() {
            return Err(Error::InvalidModel("GMTM toy densities must be strictly positive".into()));
        }
        if tries == 0 {
            return Err(Error::InvalidParameter("GMTM needs at least one try".into()));
        }
        Ok(Self { pi_star, r_check, omega, tries })
    }

    fn ny(&self) -> usize {
        self.pi_star.len()
    }

    /// All tuples in `Y^k`, first coordinate most significant.
    fn tuples(&self, k: usize) -> Vec<Vec<usize>> {
        let ny = self.ny();
        (0..ny.pow(k as u32))
            .map(|mut i| {
                let mut t = vec![0; k];
                for slot in t.iter_mut().rev() {
                    *slot = i % ny;
                    i /= ny;
                }
                t
            })
            .collect()
    }

    fn omega_sum(&self, y: usize, vs: &[usize]) -> f64 {
        vs.iter().map(|v| self.omega(&y, v)).sum()
    }

    /// Exact `y`-kernel of [`gmtm_step`], by enumerating tries and selection.
    pub fn exact_kernel(&self) -> Result<FiniteKernel> {
        let (ny, n) = (self.ny(), self.tries);
        let forward = self.tuples(n);
        let reverse = self.tuples(n - 1);
        let mut k = DMatrix::zeros(ny, ny);
        for y in 0..ny {
            for v in &forward {
                let p_v: f64 = v.iter().map(|&x| self.r_check[(y, x)]).product();
                let total = self.omega_sum(y, v);
                for &y_new in v.iter() {
                    if y_new == y {
                        continue;
                    }
                    let p_j = self.omega(&y, &y_new) / total;
                    for rest in &reverse {
                        let p_rev: f64 = rest.iter().map(|&x| self.r_check[(y_new, x)]).product();
                        let mut rev = rest.clone();
                        rev.push(y);
                        let alpha = gmtm_log_ratio(self, &y, v, &y_new, &rev)?.min(0.0).exp();
                        k[(y, y_new)] += p_v * p_j * p_rev * alpha;
                    }
                }
            }
            let off: f64 = (0..ny).filter(|&x| x != y).map(|x| k[(y, x)]).sum();
            k[(y, y)] = 1.0 - off;
        }
        FiniteKernel::new(Arc::new(StateSpace::anonymous(ny)?), k)
    }
}

impl GmtmModel for FiniteGmtm {
    type Y = usize;

    fn tries(&self) -> usize {
        self.tries
    }

    fn log_pi_star(&self, y: &usize) -> f64 {
        self.pi_star.weights()[*y].ln()
    }

    fn sample_r_check(&self, y: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(sample_index(self.r_check.row(*y).iter().copied(), rng))
    }

    fn log_r_check(&self, y: &usize, v: &usize) -> f64 {
        self.r_check[(*y, *v)].ln()
    }

    fn omega(&self, y: &usize, v: &usize) -> f64 {
        match self.omega {
            OmegaFamily::Uniform => 1.0,
            OmegaFamily::Proposal => self.r_check[(*y, *v)],
            OmegaFamily::Target => self.pi_star.weights()[*v],
        }
    }
}

/// The `(R, S, T)` densities embedding GMTM in systematic refreshment, with
/// `u` the `n − 1` rejected tries and `û` the `n − 1` drawn reverse tries:
///
/// * `R(y, u) = n ∏_k ř(y, u_k) Σ_ŷ ř(y, ŷ) ω(y, ŷ) / (Σ_ℓ ω(y, u_ℓ) + ω(y, ŷ))`
/// * `S(y, u; ŷ) ∝ ř(y, ŷ) ω(y, ŷ) / (Σ_ℓ ω(y, u_ℓ) + ω(y, ŷ))`
/// * `T(y, u, ŷ; û) = ∏_k ř(ŷ, û_k)`
pub struct GmtmDecomposition<'a> {
    pub model: &'a FiniteGmtm,
    tuples: Vec<Vec<usize>>,
}

pub fn gmtm_rst_decomposition(m: &FiniteGmtm) -> GmtmDecomposition<'_> {
    GmtmDecomposition { model: m, tuples: m.tuples(m.tries - 1) }
}

impl GmtmDecomposition<'_> {
    pub fn aux_size(&self) -> usize {
        self.tuples.len()
    }

    pub fn aux(&self, u: usize) -> &[usize] {
        &self.tuples[u]
    }

    fn selection(&self, y: usize, u: usize, y_new: usize) -> f64 {
        let m = self.model;
        m.r_check[(y, y_new)] * m.omega(&y, &y_new) / (m.omega_sum(y, &self.tuples[u]) + m.omega(&y, &y_new))
    }

    fn selection_total(&self, y: usize, u: usize) -> f64 {
        (0..self.model.ny()).map(|yn| self.selection(y, u, yn)).sum()
    }

    pub fn r(&self, y: usize, u: usize) -> f64 {
        let m = self.model;
        let prod: f64 = self.tuples[u].iter().map(|&x| m.r_check[(y, x)]).product();
        m.tries as f64 * prod * self.selection_total(y, u)
    }

    pub fn s(&self, y: usize, u: usize, y_new: usize) -> f64 {
        self.selection(y, u, y_new) / self.selection_total(y, u)
    }

    pub fn t(&self, y_new: usize, u_new: usize) -> f64 {
        self.tuples[u_new].iter().map(|&x| self.model.r_check[(y_new, x)]).product()
    }

    /// The finite augmented model with these densities.
    pub fn to_augmented(&self) -> Result<FiniteAugmentedModel> {
        let (ny, k) = (self.model.ny(), self.aux_size());
        let labels = self
            .tuples
            .iter()
            .map(|t| format!("({})", t.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        let r = DMatrix::from_fn(ny, k, |y, u| self.r(y, u));
        let s = DMatrix::from_fn(ny * k, ny, |row, yn| self.s(row / k, row % k, yn));
        let t = DMatrix::from_fn(ny * k * ny, k, |row, un| self.t(row % ny, un));
        FiniteAugmentedModel::new(
            Arc::new(StateSpace::anonymous(ny)?),
            Arc::new(StateSpace::new(labels)?),
            self.model.pi_star.clone(),
            r,
            s,
            t,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactify::{extract_kernel, marginal_kernel, KernelKind};
    use crate::sampler::RngStream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn toy(omega: OmegaFamily, tries: usize) -> FiniteGmtm {
        let pi = ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let r = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.4, 0.2, 0.4, 0.1, 0.6, 0.3]);
        FiniteGmtm::new(pi, r, omega, tries).unwrap()
    }

    #[test]
    fn involution_contract() {
        let mut rng = RngStream::new(1, 0).rng();
        for f in [Involution::Negate, Involution::ReflectAbout { c: 0.7 }, Involution::Reciprocal] {
            for _ in 0..1000 {
                let u = vec![rng.random::<f64>() * 6.0 - 3.0 + 1e-3];
                let back = f.apply(&f.apply(&u));
                assert!((back[0] - u[0]).abs() <= 1e-10 * u[0].abs().max(1.0));
                let chain = f.log_jacobian(&u) + f.log_jacobian(&f.apply(&u));
                assert!(chain.abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn rmcmc_reciprocity() {
        let mut rng = RngStream::new(2, 0).rng();
        for f in [Involution::Negate, Involution::Reciprocal] {
            let m = GaussianRmcmc::new(0.5, 1.5, 1.0, f).unwrap();
            for _ in 0..1000 {
                let y = rng.random::<f64>() * 4.0 - 2.0;
                let yn = m.sample_r_check(&y, &mut rng).unwrap();
                let u = m.sample_s_check(&y, &yn, &mut rng).unwrap();
                let a = rmcmc_log_ratio(&m, &y, &u, &yn).unwrap();
                let b = rmcmc_log_ratio(&m, &yn, &f.apply(&u), &y).unwrap();
                assert!((a + b).abs() <= 1e-10, "{f:?}: {}", a + b);
            }
        }
    }

    #[test]
    fn rmcmc_symmetric_case_is_plain_mh() {
        // š independent of its arguments via κ = 0 and f = negate keeps š(−u) = š(u)
        let mut m = GaussianRmcmc::new(0.0, 1.0, 1.0, Involution::Negate).unwrap();
        m.kappa = 0.0;
        let lr = rmcmc_log_ratio(&m, &0.2, &[0.4], &1.1).unwrap();
        assert_abs_diff_eq!(lr, m.log_pi_star(&1.1) - m.log_pi_star(&0.2), epsilon = 1e-12);
    }

    #[test]
    fn gmtm_single_try_is_mh() {
        let m = GaussianGmtm { mean: 0.0, sd: 1.0, step: 0.7, tries: 1, omega: OmegaFamily::Target };
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..1000 {
            let y = rng.random::<f64>() * 4.0 - 2.0;
            let yn = m.sample_r_check(&y, &mut rng).unwrap();
            let lr = gmtm_log_ratio(&m, &y, &[yn], &yn, &[y]).unwrap();
            let mh = m.log_pi_star(&yn) + m.log_r_check(&yn, &y) - m.log_pi_star(&y) - m.log_r_check(&y, &yn);
            assert!((lr.min(0.0).exp() - mh.min(0.0).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn selection_frequencies() {
        let mut rng = RngStream::new(4, 0).rng();
        let w = [0.5, 2.0, 1.5];
        let mut c = [0u32; 3];
        let n = 100_000;
        for _ in 0..n {
            c[select_index(&w, &mut rng).unwrap()] += 1;
        }
        for j in 0..3 {
            let p = w[j] / 4.0;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c[j] as f64 / n as f64 - p).abs() < 3.0 * se);
        }
        assert_eq!(select_index(&[0.0, 0.0], &mut rng), Err(Error::ZeroSelectionWeights));
    }

    #[test]
    fn decomposition_normalizes_and_matches_ratio() {
        for omega in [OmegaFamily::Uniform, OmegaFamily::Proposal, OmegaFamily::Target] {
            for tries in [1, 2, 3] {
                let g = toy(omega, tries);
                let d = gmtm_rst_decomposition(&g);
                let m = d.to_augmented().unwrap();
                for y in 0..3 {
                    let total: f64 = (0..d.aux_size()).map(|u| d.r(y, u)).sum();
                    assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
                    for u in 0..d.aux_size() {
                        let s: f64 = (0..3).map(|yn| d.s(y, u, yn)).sum();
                        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
                        for yn in 0..3 {
                            for un in 0..d.aux_size() {
                                let mut fwd = d.aux(u).to_vec();
                                fwd.push(yn);
                                let mut rev = d.aux(un).to_vec();
                                rev.push(y);
                                let direct = gmtm_log_ratio(&g, &y, &fwd, &yn, &rev).unwrap().exp().min(1.0);
                                assert_abs_diff_eq!(
                                    m.freeze_ratio(y, u, yn, un).min(1.0),
                                    direct,
                                    epsilon = 1e-12
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn embedding_kernel_matches_direct_kernel() {
        for omega in [OmegaFamily::Uniform, OmegaFamily::Proposal, OmegaFamily::Target] {
            let g = toy(omega, 3);
            let direct = g.exact_kernel().unwrap();
            let m = gmtm_rst_decomposition(&g).to_augmented().unwrap();
            let a2 = extract_kernel(KernelKind::SystematicRefresh, &m).unwrap();
            let ky = marginal_kernel(&a2, &m).unwrap();
            assert!((direct.matrix() - ky.matrix()).amax() <= 1e-12);
            assert!(direct.invariance_residual(&g.pi_star) <= 1e-12);
        }
    }
}
