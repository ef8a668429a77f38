//! Importance-sampling weight models: GIMH as a freeze algorithm, MCWM as its
//! noisy counterpart, and ABC with a kernel-smoothed likelihood.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exactify::FiniteAugmentedModel;
use crate::markov::{ProbVector, StateSpace};
use crate::sampler::{log_normal, log_sum_exp, sample_index, AugmentedTarget, ProposalKernel};

/// Latent-variable target `π̄(y, v)` with an importance proposal `q_y`.
pub trait ImportanceModel {
    type Y: Clone + Debug + PartialEq;
    type V: Clone + Debug;

    /// Number of importance draws `N`.
    fn sample_size(&self) -> usize;
    fn log_joint(&self, y: &Self::Y, v: &Self::V) -> f64;
    fn sample_q(&self, y: &Self::Y, rng: &mut dyn RngCore) -> Result<Self::V>;
    fn log_q(&self, y: &Self::Y, v: &Self::V) -> f64;
}

/// `log π*_N(y) = log (1/N) Σ_ℓ π̄(y, v_ℓ) / q_y(v_ℓ)` for a given sample.
pub fn log_estimate<M: ImportanceModel>(m: &M, y: &M::Y, sample: &[M::V]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("importance sample is empty".into()));
    }
    let terms = sample
        .iter()
        .map(|v| {
            let lq = m.log_q(y, v);
            if lq.is_finite() {
                Ok(m.log_joint(y, v) - lq)
            } else {
                Err(Error::InvalidModel(format!("proposal density {} at a drawn point {v:?}", lq.exp())))
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_sum_exp(&terms) - (sample.len() as f64).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GimhEstimate<V> {
    pub value: f64,
    pub log_value: f64,
    pub sample: Vec<V>,
}

/// Draws `v_1..v_N ~ q_y` and returns the importance estimate with its sample.
pub fn gimh_estimate<M: ImportanceModel>(
    m: &M,
    y: &M::Y,
    rng: &mut dyn RngCore,
) -> Result<GimhEstimate<M::V>> {
    let n = m.sample_size();
    if n == 0 {
        return Err(Error::InvalidParameter("importance sample size must be at least 1".into()));
    }
    let sample = (0..n).map(|_| m.sample_q(y, rng)).collect::<Result<Vec<_>>>()?;
    let log_value = log_estimate(m, y, &sample)?;
    Ok(GimhEstimate { value: log_value.exp(), log_value, sample })
}

fn draw_sample<M: ImportanceModel>(m: &M, y: &M::Y, rng: &mut dyn RngCore) -> Result<Vec<M::V>> {
    (0..m.sample_size()).map(|_| m.sample_q(y, rng)).collect()
}

fn log_q_product<M: ImportanceModel>(m: &M, y: &M::Y, sample: &[M::V]) -> f64 {
    sample.iter().map(|v| m.log_q(y, v)).sum()
}

/// GIMH written as a freeze model on `Y × V^N`.
///
/// `π*(y) r(y, u) = π*_N(y; u) ∏ q_y(v_ℓ)`, `T(y, u, ŷ; ·) = ∏ q_ŷ` and
/// `S(y, u; ŷ) = s(y, ŷ)`, so the freeze ratio collapses to
/// `π*_N(ŷ) s(ŷ, y) / π*_N(y) s(y, ŷ)`. The same model with `Ř = ∏ q_y`
/// and `w_u(y) ∝ π*_N(y; u)` gives MCWM (noisy) and random refreshment.
pub struct GimhFreeze<M, S> {
    pub importance: M,
    pub proposal: S,
}

pub fn gimh_as_freeze<M: ImportanceModel, S: ProposalKernel<M::Y>>(
    importance: M,
    proposal: S,
) -> GimhFreeze<M, S> {
    GimhFreeze { importance, proposal }
}

impl<M: ImportanceModel, S: ProposalKernel<M::Y>> AugmentedTarget for GimhFreeze<M, S> {
    type Y = M::Y;
    type U = Vec<M::V>;

    fn log_joint(&self, y: &M::Y, u: &Vec<M::V>) -> f64 {
        match log_estimate(&self.importance, y, u) {
            Ok(le) => le + log_q_product(&self.importance, y, u),
            Err(_) => f64::NAN,
        }
    }

    fn sample_s(&self, y: &M::Y, _u: &Vec<M::V>, rng: &mut dyn RngCore) -> Result<M::Y> {
        self.proposal.sample(y, rng)
    }

    fn log_s(&self, y: &M::Y, _u: &Vec<M::V>, y_new: &M::Y) -> f64 {
        self.proposal.log_density(y, y_new)
    }

    fn sample_t(&self, _y: &M::Y, _u: &Vec<M::V>, y_new: &M::Y, rng: &mut dyn RngCore) -> Result<Vec<M::V>> {
        draw_sample(&self.importance, y_new, rng)
    }

    fn log_t(&self, _y: &M::Y, _u: &Vec<M::V>, y_new: &M::Y, u_new: &Vec<M::V>) -> f64 {
        log_q_product(&self.importance, y_new, u_new)
    }

    fn sample_check(&self, y: &M::Y, rng: &mut dyn RngCore) -> Result<Vec<M::V>> {
        draw_sample(&self.importance, y, rng)
    }

    fn log_weight(&self, y: &M::Y, u: &Vec<M::V>) -> Result<f64> {
        log_estimate(&self.importance, y, u)
    }
}

/// Importance model on finite `Y` and `V` given by dense matrices.
#[derive(Debug, Clone)]
pub struct FiniteImportanceModel {
    /// Unnormalized `π̄(y, v)`, `|Y| × |V|`, strictly positive.
    pub pi_bar: DMatrix<f64>,
    /// `q_y(v)`, row-stochastic and strictly positive.
    pub q: DMatrix<f64>,
    pub n: usize,
}

impl FiniteImportanceModel {
    pub fn new(pi_bar: DMatrix<f64>, q: DMatrix<f64>, n: usize) -> Result<Self> {
        if pi_bar.shape() != q.shape() {
            return Err(Error::DimensionMismatch { expected: pi_bar.len(), found: q.len() });
        }
        if n == 0 {
            return Err(Error::InvalidParameter("importance sample size must be at least 1".into()));
        }
        if pi_bar.iter().chain(q.iter()).any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidModel("pi_bar and q must be strictly positive".into()));
        }
        for (i, row) in q.row_iter().enumerate() {
            if (row.sum() - 1.0).abs() > crate::tol::ENTRY {
                return Err(Error::InvalidModel(format!("q row {i} does not sum to 1")));
            }
        }
        Ok(Self { pi_bar, q, n })
    }

    pub fn ny(&self) -> usize {
        self.pi_bar.nrows()
    }

    pub fn nv(&self) -> usize {
        self.pi_bar.ncols()
    }

    /// The marginal `π*(y) ∝ Σ_v π̄(y, v)`, normalized.
    pub fn pi_star(&self) -> ProbVector {
        ProbVector::normalized(self.pi_bar.row_iter().map(|r| r.sum()).collect()).expect("positive masses")
    }

    /// Decodes an auxiliary index into `(v_1, .., v_N)`, first draw most significant.
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for slot in out.iter_mut().rev() {
            *slot = index % self.nv();
            index /= self.nv();
        }
        out
    }

    pub fn aux_size(&self) -> usize {
        self.nv().pow(self.n as u32)
    }

    /// Exact finite model on `Y × V^N` with `y`-proposal `s` (`|Y| × |Y|`).
    /// The refresh pair is `Ř = ∏ q_y` with `w_u(y) ∝ π*_N(y; u)`, so the
    /// noisy kernel is MCWM.
    pub fn to_augmented(&self, s: &DMatrix<f64>) -> Result<FiniteAugmentedModel> {
        let (ny, nv, k) = (self.ny(), self.nv(), self.aux_size());
        if s.nrows() != ny || s.ncols() != ny {
            return Err(Error::DimensionMismatch { expected: ny * ny, found: s.len() });
        }
        let y_space = Arc::new(StateSpace::anonymous(ny)?);
        let u_labels = (0..k)
            .map(|i| self.decode(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect();
        let u_space = Arc::new(StateSpace::new(u_labels)?);
        let prod_q = |y: usize, u: usize| self.decode(u).iter().map(|&v| self.q[(y, v)]).product::<f64>();
        let estimate = |y: usize, u: usize| {
            self.decode(u).iter().map(|&v| self.pi_bar[(y, v)] / self.q[(y, v)]).sum::<f64>() / self.n as f64
        };
        debug_assert_eq!(nv.pow(self.n as u32), k);
        let r_check = DMatrix::from_fn(ny, k, prod_q);
        let weights = DMatrix::from_fn(ny, k, estimate);
        let s_full = DMatrix::from_fn(ny * k, ny, |row, yn| s[(row / k, yn)]);
        let t_full = DMatrix::from_fn(ny * k * ny, k, |row, un| prod_q(row % ny, un));
        FiniteAugmentedModel::with_weights(y_space, u_space, self.pi_star(), r_check, weights, s_full, t_full)
    }
}

impl ImportanceModel for FiniteImportanceModel {
    type Y = usize;
    type V = usize;

    fn sample_size(&self) -> usize {
        self.n
    }

    fn log_joint(&self, y: &usize, v: &usize) -> f64 {
        self.pi_bar[(*y, *v)].ln()
    }

    fn sample_q(&self, y: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(sample_index(self.q.row(*y).iter().copied(), rng))
    }

    fn log_q(&self, y: &usize, v: &usize) -> f64 {
        self.q[(*y, *v)].ln()
    }
}

/// A finite `y`-proposal matrix as a [`ProposalKernel`].
#[derive(Debug, Clone)]
pub struct MatrixProposal(pub DMatrix<f64>);

impl ProposalKernel<usize> for MatrixProposal {
    fn sample(&self, y: &usize, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(sample_index(self.0.row(*y).iter().copied(), rng))
    }

    fn log_density(&self, y: &usize, y_new: &usize) -> f64 {
        self.0[(*y, *y_new)].ln()
    }
}

/// Gaussian random walk on the real line.
#[derive(Debug, Clone, Copy)]
pub struct RandomWalk {
    pub step: f64,
}

impl ProposalKernel<f64> for RandomWalk {
    fn sample(&self, y: &f64, rng: &mut dyn RngCore) -> Result<f64> {
        let normal = Normal::new(*y, self.step).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(normal.sample(rng))
    }

    fn log_density(&self, y: &f64, y_new: &f64) -> f64 {
        log_normal(*y_new, *y, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbcKernel {
    /// Standard normal density.
    Gaussian,
    /// Density 1/2 on `[−1, 1]`.
    Uniform,
}

impl AbcKernel {
    pub fn density(self, x: f64) -> f64 {
        match self {
            AbcKernel::Gaussian => log_normal(x, 0.0, 1.0).exp(),
            AbcKernel::Uniform => {
                if x.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }
}

/// ABC scenario parameters. The prior on `y` is `N(prior_mean, prior_sd²)`,
/// each dataset has `n_obs` points `~ N(y, sim_sd²)`, the summary is the
/// dataset mean and `n` independent datasets are averaged in the weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcConfig {
    pub kernel: AbcKernel,
    pub h: f64,
    pub obs: f64,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default = "one")]
    pub prior_sd: f64,
    #[serde(default = "one")]
    pub sim_sd: f64,
    #[serde(default = "one_usize")]
    pub n_obs: usize,
    #[serde(rename = "N", default = "one_usize")]
    pub n: usize,
    #[serde(default = "one")]
    pub step: f64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl AbcConfig {
    pub fn build(&self) -> Result<AbcModel> {
        AbcModel::new(self.clone())
    }
}

/// ABC target on `Y = ℝ` with `U` = `N` simulated datasets.
///
/// `Ř(y, ·)` simulates the datasets and `w_u(y) ∝ mean_j K[(s(u_j) − obs)/h]`,
/// whose normalizer `∫ Ř(y, du′) K[...]` is never evaluated.
#[derive(Debug, Clone)]
pub struct AbcModel {
    pub config: AbcConfig,
    /// Positive multiplier on `K`; ratios must not depend on it.
    pub kernel_scale: f64,
    noise: Normal<f64>,
}

impl AbcModel {
    pub fn new(config: AbcConfig) -> Result<Self> {
        if !(config.h > 0.0 && config.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth h = {} must be positive", config.h)));
        }
        if !(config.prior_sd > 0.0 && config.sim_sd > 0.0 && config.step > 0.0) {
            return Err(Error::InvalidParameter("standard deviations must be positive".into()));
        }
        if config.n_obs == 0 || config.n == 0 {
            return Err(Error::InvalidParameter("n_obs and N must be at least 1".into()));
        }
        let noise = Normal::new(0.0, config.sim_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self { config, kernel_scale: 1.0, noise })
    }

    pub fn with_kernel_scale(mut self, scale: f64) -> Self {
        self.kernel_scale = scale;
        self
    }

    pub fn summary(dataset: &[f64]) -> f64 {
        dataset.iter().sum::<f64>() / dataset.len() as f64
    }

    fn kernel_value(&self, dataset: &[f64]) -> f64 {
        self.kernel_scale
            * self.config.kernel.density((Self::summary(dataset) - self.config.obs) / self.config.h)
    }

    /// `mean_j K[(s(u_j) − obs)/h]`.
    pub fn weight(&self, u: &[Vec<f64>]) -> f64 {
        u.iter().map(|d| self.kernel_value(d)).sum::<f64>() / u.len() as f64
    }

    fn log_prior(&self, y: f64) -> f64 {
        log_normal(y, self.config.prior_mean, self.config.prior_sd)
    }

    fn log_simulator(&self, y: f64, u: &[Vec<f64>]) -> f64 {
        u.iter().flatten().map(|x| log_normal(*x, y, self.config.sim_sd)).sum()
    }

    fn simulate(&self, y: f64, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
        (0..self.config.n)
            .map(|_| (0..self.config.n_obs).map(|_| y + self.noise.sample(rng)).collect())
            .collect()
    }

    /// Mean and variance of the exact ABC posterior for the Gaussian kernel.
    pub fn gaussian_posterior(&self) -> Option<(f64, f64)> {
        if self.config.kernel != AbcKernel::Gaussian {
            return None;
        }
        let c = &self.config;
        let tau2 = c.sim_sd.powi(2) / c.n_obs as f64 + c.h.powi(2);
        let s02 = c.prior_sd.powi(2);
        let var = 1.0 / (1.0 / s02 + 1.0 / tau2);
        Some((var * (c.prior_mean / s02 + c.obs / tau2), var))
    }

    /// A datum set whose summary equals `target`, for initialization.
    pub fn dataset_with_summary(&self, target: f64) -> Vec<Vec<f64>> {
        vec![vec![target; self.config.n_obs]; self.config.n]
    }
}

/// `K[(s(u′) − obs)/h] / K[(s(u) − obs)/h]`, averaged over datasets.
pub fn abc_weight_ratio(m: &AbcModel, _y: f64, u: &[Vec<f64>], u_new: &[Vec<f64>]) -> Result<f64> {
    let den = m.weight(u);
    if den == 0.0 {
        return Err(Error::ZeroAbcWeight);
    }
    Ok(m.weight(u_new) / den)
}

impl AugmentedTarget for AbcModel {
    type Y = f64;
    type U = Vec<Vec<f64>>;

    fn log_joint(&self, y: &f64, u: &Vec<Vec<f64>>) -> f64 {
        self.log_prior(*y) + self.log_simulator(*y, u) + self.weight(u).ln()
    }

    fn sample_s(&self, y: &f64, _u: &Vec<Vec<f64>>, rng: &mut dyn RngCore) -> Result<f64> {
        RandomWalk { step: self.config.step }.sample(y, rng)
    }

    fn log_s(&self, y: &f64, _u: &Vec<Vec<f64>>, y_new: &f64) -> f64 {
        log_normal(*y_new, *y, self.config.step)
    }

    fn sample_t(
        &self,
        _y: &f64,
        _u: &Vec<Vec<f64>>,
        y_new: &f64,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Vec<f64>>> {
        Ok(self.simulate(*y_new, rng))
    }

    fn log_t(&self, _y: &f64, _u: &Vec<Vec<f64>>, y_new: &f64, u_new: &Vec<Vec<f64>>) -> f64 {
        self.log_simulator(*y_new, u_new)
    }

    fn sample_check(&self, y: &f64, rng: &mut dyn RngCore) -> Result<Vec<Vec<f64>>> {
        Ok(self.simulate(*y, rng))
    }

    fn log_weight(&self, _y: &f64, u: &Vec<Vec<f64>>) -> Result<f64> {
        let w = self.weight(u);
        Ok(w.ln())
    }
}
