//! Exact transition matrices of the augmented samplers on finite models.
//!
//! A [`FiniteAugmentedModel`] stores every component density as a dense
//! matrix. Joint states `(y, u)` are indexed `y·|U| + u`. Each extracted
//! kernel is assembled from accepted off-diagonal mass, with the diagonal set
//! to one minus that mass so rows are stochastic by construction.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::spectrum::unit_eigenvalue_multiplicity;
use crate::markov::{compose, FiniteKernel, KernelDocument, ProbVector, StateSpace};
use crate::sampler::{sample_index, AugmentedTarget};
use crate::tol;

/// Finite augmented target with dense component densities.
#[derive(Debug, Clone)]
pub struct FiniteAugmentedModel {
    y_space: Arc<StateSpace>,
    u_space: Arc<StateSpace>,
    pi_star: ProbVector,
    /// `R(y, u)`, `|Y| × |U|`.
    r: DMatrix<f64>,
    /// `(Ř, w)` with `R = Ř ∘ w` entrywise.
    check: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// `S(y, u; ŷ)`, rows indexed by `(y, u)`.
    s: DMatrix<f64>,
    /// `T(y, u, ŷ; û)`, rows indexed by `(y·|U| + u)·|Y| + ŷ`.
    t: DMatrix<f64>,
}

fn check_stochastic(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::InvalidModel(format!(
            "{name} has shape {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidModel(format!("{name} row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > tol::ENTRY {
            return Err(Error::InvalidModel(format!("{name} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

impl FiniteAugmentedModel {
    /// Model with a directly specified refresh kernel `R`.
    pub fn new(
        y_space: Arc<StateSpace>,
        u_space: Arc<StateSpace>,
        pi_star: ProbVector,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
        t: DMatrix<f64>,
    ) -> Result<Self> {
        let (ny, nu) = (y_space.size(), u_space.size());
        if pi_star.len() != ny {
            return Err(Error::DimensionMismatch { expected: ny, found: pi_star.len() });
        }
        if !pi_star.is_strictly_positive() {
            return Err(Error::InvalidModel("pi_star must be strictly positive".into()));
        }
        check_stochastic("R", &r, ny, nu)?;
        if r.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidModel("R must be strictly positive".into()));
        }
        check_stochastic("S", &s, ny * nu, ny)?;
        check_stochastic("T", &t, ny * nu * ny, nu)?;
        Ok(Self { y_space, u_space, pi_star, r, check: None, s, t })
    }

    /// Model whose refresh kernel is `R = Ř ∘ w`. The weights are rescaled
    /// per `y` so that `Σ_u ř(y, u) w(y, u) = 1`.
    pub fn with_weights(
        y_space: Arc<StateSpace>,
        u_space: Arc<StateSpace>,
        pi_star: ProbVector,
        r_check: DMatrix<f64>,
        weights: DMatrix<f64>,
        s: DMatrix<f64>,
        t: DMatrix<f64>,
    ) -> Result<Self> {
        let (ny, nu) = (y_space.size(), u_space.size());
        check_stochastic("R_check", &r_check, ny, nu)?;
        if weights.nrows() != ny || weights.ncols() != nu {
            return Err(Error::DimensionMismatch { expected: ny * nu, found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidModel("weights must be positive and finite".into()));
        }
        let mut w = weights;
        for y in 0..ny {
            let z: f64 = (0..nu).map(|u| r_check[(y, u)] * w[(y, u)]).sum();
            w.row_mut(y).scale_mut(1.0 / z);
        }
        let r = r_check.component_mul(&w);
        // renormalize away round-off so R passes the stochasticity check
        let mut r = r;
        for y in 0..ny {
            let z: f64 = r.row(y).sum();
            r.row_mut(y).scale_mut(1.0 / z);
        }
        let mut model = Self::new(y_space, u_space, pi_star, r, s, t)?;
        model.check = Some((r_check, w));
        Ok(model)
    }

    pub fn y_space(&self) -> &Arc<StateSpace> {
        &self.y_space
    }

    pub fn u_space(&self) -> &Arc<StateSpace> {
        &self.u_space
    }

    pub fn ny(&self) -> usize {
        self.y_space.size()
    }

    pub fn nu(&self) -> usize {
        self.u_space.size()
    }

    pub fn n_joint(&self) -> usize {
        self.ny() * self.nu()
    }

    pub fn joint_index(&self, y: usize, u: usize) -> usize {
        y * self.nu() + u
    }

    pub fn split_index(&self, i: usize) -> (usize, usize) {
        (i / self.nu(), i % self.nu())
    }

    pub fn pi_star(&self) -> &ProbVector {
        &self.pi_star
    }

    pub fn r(&self, y: usize, u: usize) -> f64 {
        self.r[(y, u)]
    }

    pub fn r_check(&self, y: usize, u: usize) -> Option<f64> {
        self.check.as_ref().map(|(rc, _)| rc[(y, u)])
    }

    pub fn weight(&self, y: usize, u: usize) -> Option<f64> {
        self.check.as_ref().map(|(_, w)| w[(y, u)])
    }

    pub fn has_weights(&self) -> bool {
        self.check.is_some()
    }

    /// True when `w(y, ·)` is constant for every `y`, which forces `Ř = R`.
    pub fn weights_constant(&self) -> bool {
        match &self.check {
            None => true,
            Some((_, w)) => w.row_iter().all(|row| {
                let first = row[0];
                row.iter().all(|v| (v - first).abs() <= tol::ENTRY * first.abs().max(1.0))
            }),
        }
    }

    pub fn s(&self, y: usize, u: usize, y_new: usize) -> f64 {
        self.s[(self.joint_index(y, u), y_new)]
    }

    pub fn t(&self, y: usize, u: usize, y_new: usize, u_new: usize) -> f64 {
        self.t[(self.joint_index(y, u) * self.ny() + y_new, u_new)]
    }

    /// `π(y, u) = π*(y) R(y, u)`.
    pub fn joint_pi(&self) -> ProbVector {
        let w = self.pi_star.weights();
        let masses = (0..self.n_joint())
            .map(|i| {
                let (y, u) = self.split_index(i);
                w[y] * self.r[(y, u)]
            })
            .collect();
        ProbVector::normalized(masses).expect("positive joint masses")
    }

    pub fn joint_space(&self) -> Arc<StateSpace> {
        let labels = (0..self.n_joint())
            .map(|i| {
                let (y, u) = self.split_index(i);
                format!("{}|{}", self.y_space.labels()[y], self.u_space.labels()[u])
            })
            .collect();
        Arc::new(StateSpace::new(labels).expect("product labels are distinct"))
    }

    /// Unclamped freeze ratio; 0 when the reverse move has no mass.
    pub fn freeze_ratio(&self, y: usize, u: usize, y_new: usize, u_new: usize) -> f64 {
        let w = self.pi_star.weights();
        let num = w[y_new] * self.r[(y_new, u_new)] * self.s(y_new, u_new, y) * self.t(y_new, u_new, y, u);
        let den = w[y] * self.r[(y, u)] * self.s(y, u, y_new) * self.t(y, u, y_new, u_new);
        num / den
    }

    /// The proposal `k(y, ŷ) = Σ_u r(y, u) s(y, u; ŷ)` of the marginal chain.
    pub fn marginal_proposal(&self) -> DMatrix<f64> {
        let (ny, nu) = (self.ny(), self.nu());
        DMatrix::from_fn(ny, ny, |y, yn| (0..nu).map(|u| self.r[(y, u)] * self.s(y, u, yn)).sum())
    }
}

/// Which exact kernel to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Freeze accept/reject kernel `Q` on `Y × U`.
    Freeze,
    /// `P2 Q`: refresh from `R`, then freeze.
    SystematicRefresh,
    /// `P3 Q`: MH refresh through `(Ř, w)`, then freeze.
    RandomRefresh,
    /// `P̌ Q`: refresh from `Ř`, then freeze.
    Noisy,
    /// MH on `Y` with proposal `k`.
    MarginalMh,
    /// `P2(y, u; y, u′) = R(y, u′)`.
    SystematicRefreshComponent,
    /// `P3`, the refresh step of random refreshment.
    RandomRefreshComponent,
    /// `P̌(y, u; y, u′) = Ř(y, u′)`.
    NoisyRefreshComponent,
}

impl KernelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Freeze => "freeze",
            KernelKind::SystematicRefresh => "systematic_refresh",
            KernelKind::RandomRefresh => "random_refresh",
            KernelKind::Noisy => "noisy",
            KernelKind::MarginalMh => "marginal_mh",
            KernelKind::SystematicRefreshComponent => "systematic_refresh_component",
            KernelKind::RandomRefreshComponent => "random_refresh_component",
            KernelKind::NoisyRefreshComponent => "noisy_refresh_component",
        }
    }

    pub fn on_joint_space(self) -> bool {
        self != KernelKind::MarginalMh
    }
}

#[derive(Debug, Clone)]
pub struct ExtractedKernel {
    pub kernel: FiniteKernel,
    pub algorithm: KernelKind,
}

impl ExtractedKernel {
    pub fn to_document(&self, pi: &ProbVector) -> KernelDocument {
        KernelDocument::from_kernel(&self.kernel, pi).with_algorithm(self.algorithm.as_str())
    }
}

/// Fills the diagonal with the rejection mass and wraps the result.
fn close_rows(space: Arc<StateSpace>, mut m: DMatrix<f64>) -> Result<FiniteKernel> {
    for i in 0..m.nrows() {
        m[(i, i)] = 0.0;
        let off: f64 = m.row(i).sum();
        m[(i, i)] = (1.0 - off).max(0.0);
    }
    FiniteKernel::new(space, m)
}

fn freeze_matrix(m: &FiniteAugmentedModel) -> DMatrix<f64> {
    let n = m.n_joint();
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        let (y, u) = m.split_index(i);
        for y_new in 0..m.ny() {
            let sy = m.s(y, u, y_new);
            if sy == 0.0 {
                continue;
            }
            for u_new in 0..m.nu() {
                let j = m.joint_index(y_new, u_new);
                let tu = m.t(y, u, y_new, u_new);
                if j == i || tu == 0.0 {
                    continue;
                }
                q[(i, j)] += sy * tu * m.freeze_ratio(y, u, y_new, u_new).min(1.0);
            }
        }
    }
    q
}

/// Kernel on `Y × U` that only redraws `u` from the rows of `refresh`.
fn refresh_matrix(m: &FiniteAugmentedModel, refresh: impl Fn(usize, usize, usize) -> f64) -> DMatrix<f64> {
    let n = m.n_joint();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let (y, u) = m.split_index(i);
        for u_new in 0..m.nu() {
            p[(i, m.joint_index(y, u_new))] = refresh(y, u, u_new);
        }
    }
    p
}

fn weights_required(m: &FiniteAugmentedModel) -> Result<&(DMatrix<f64>, DMatrix<f64>)> {
    m.check.as_ref().ok_or(Error::WeightsNotConfigured)
}

/// Exact one-step transition matrix of `kind` on `m`.
pub fn extract_kernel(kind: KernelKind, m: &FiniteAugmentedModel) -> Result<ExtractedKernel> {
    let joint = m.joint_space();
    let kernel = match kind {
        KernelKind::Freeze => close_rows(joint, freeze_matrix(m))?,
        KernelKind::SystematicRefreshComponent => {
            FiniteKernel::new(joint, refresh_matrix(m, |y, _, un| m.r[(y, un)]))?
        }
        KernelKind::NoisyRefreshComponent => {
            let (rc, _) = weights_required(m)?;
            FiniteKernel::new(joint, refresh_matrix(m, |y, _, un| rc[(y, un)]))?
        }
        KernelKind::RandomRefreshComponent => {
            let (rc, w) = weights_required(m)?;
            let p = refresh_matrix(m, |y, u, un| {
                if un == u {
                    0.0
                } else {
                    rc[(y, un)] * (w[(y, un)] / w[(y, u)]).min(1.0)
                }
            });
            close_rows(joint, p)?
        }
        KernelKind::SystematicRefresh => compose2(m, KernelKind::SystematicRefreshComponent)?,
        KernelKind::RandomRefresh => compose2(m, KernelKind::RandomRefreshComponent)?,
        KernelKind::Noisy => compose2(m, KernelKind::NoisyRefreshComponent)?,
        KernelKind::MarginalMh => {
            let k = m.marginal_proposal();
            let w = m.pi_star.weights();
            let ny = m.ny();
            let mut p = DMatrix::zeros(ny, ny);
            for y in 0..ny {
                for yn in 0..ny {
                    if yn != y && k[(y, yn)] > 0.0 {
                        let ratio = w[yn] * k[(yn, y)] / (w[y] * k[(y, yn)]);
                        p[(y, yn)] = k[(y, yn)] * ratio.min(1.0);
                    }
                }
            }
            close_rows(m.y_space.clone(), p)?
        }
    };
    Ok(ExtractedKernel { kernel, algorithm: kind })
}

fn compose2(m: &FiniteAugmentedModel, refresh: KernelKind) -> Result<FiniteKernel> {
    let p = extract_kernel(refresh, m)?.kernel;
    let q = extract_kernel(KernelKind::Freeze, m)?.kernel;
    compose(&p, &q)
}

/// Unique stationary law of `k`, by one linear solve.
pub fn stationary_distribution(k: &FiniteKernel) -> Result<ProbVector> {
    let multiplicity = unit_eigenvalue_multiplicity(k, tol::UNIT_EIGENVALUE);
    if multiplicity > 1 {
        return Err(Error::Reducible { multiplicity });
    }
    let n = k.size();
    // π (I − K + 11ᵀ) = 1ᵀ has the stationary law as its unique solution
    let a = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - k.entry(i, j) + 1.0
    });
    let pi =
        a.transpose().lu().solve(&DVector::from_element(n, 1.0)).ok_or(Error::Reducible { multiplicity })?;
    let masses: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let pi = ProbVector::normalized(masses)?;
    let residual = k.invariance_residual(&pi);
    if residual > tol::ENTRY {
        return Err(Error::NotInvariant { residual });
    }
    Ok(pi)
}

/// Sums a law on `Y × U` over `u`.
pub fn y_marginal(m: &FiniteAugmentedModel, joint: &ProbVector) -> Result<ProbVector> {
    if joint.len() != m.n_joint() {
        return Err(Error::DimensionMismatch { expected: m.n_joint(), found: joint.len() });
    }
    let w = joint.weights();
    ProbVector::normalized((0..m.ny()).map(|y| (0..m.nu()).map(|u| w[m.joint_index(y, u)]).sum()).collect())
}

/// The `y`-process kernel `K_Y(y, ŷ) = Σ_u p(u | y) Σ_û K(y, u; ŷ, û)`.
///
/// The refresh law `p(u | y)` is `R` for systematic refreshment and `Ř` for
/// the noisy algorithm. Random refreshment has a Markov `y`-process only when
/// `w` is constant, and freeze never does.
pub fn marginal_kernel(k: &ExtractedKernel, m: &FiniteAugmentedModel) -> Result<FiniteKernel> {
    let refresh: &DMatrix<f64> = match k.algorithm {
        KernelKind::MarginalMh => return Ok(k.kernel.clone()),
        KernelKind::SystematicRefresh => &m.r,
        KernelKind::RandomRefresh if m.weights_constant() => &m.r,
        KernelKind::Noisy => &weights_required(m)?.0,
        other => return Err(Error::NoMarginal(other.as_str().into())),
    };
    if k.kernel.size() != m.n_joint() {
        return Err(Error::DimensionMismatch { expected: m.n_joint(), found: k.kernel.size() });
    }
    let (ny, nu) = (m.ny(), m.nu());
    let matrix = DMatrix::from_fn(ny, ny, |y, yn| {
        (0..nu)
            .map(|u| {
                let row = m.joint_index(y, u);
                refresh[(y, u)] * (0..nu).map(|un| k.kernel.entry(row, m.joint_index(yn, un))).sum::<f64>()
            })
            .sum()
    });
    FiniteKernel::new(m.y_space.clone(), matrix)
}

impl AugmentedTarget for FiniteAugmentedModel {
    type Y = usize;
    type U = usize;

    fn log_joint(&self, y: &usize, u: &usize) -> f64 {
        (self.pi_star.weights()[*y] * self.r[(*y, *u)]).ln()
    }

    fn sample_s(&self, y: &usize, u: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(sample_index(self.s.row(self.joint_index(*y, *u)).iter().copied(), rng))
    }

    fn log_s(&self, y: &usize, u: &usize, y_new: &usize) -> f64 {
        self.s(*y, *u, *y_new).ln()
    }

    fn sample_t(&self, y: &usize, u: &usize, y_new: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        let row = self.joint_index(*y, *u) * self.ny() + *y_new;
        Ok(sample_index(self.t.row(row).iter().copied(), rng))
    }

    fn log_t(&self, y: &usize, u: &usize, y_new: &usize, u_new: &usize) -> f64 {
        self.t(*y, *u, *y_new, *u_new).ln()
    }

    fn sample_refresh(&self, y: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(sample_index(self.r.row(*y).iter().copied(), rng))
    }

    fn sample_check(&self, y: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        let (rc, _) = weights_required(self)?;
        Ok(sample_index(rc.row(*y).iter().copied(), rng))
    }

    fn log_weight(&self, y: &usize, u: &usize) -> Result<f64> {
        let (_, w) = weights_required(self)?;
        Ok(w[(*y, *u)].ln())
    }
}
