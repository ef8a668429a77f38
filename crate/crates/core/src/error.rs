use std::fmt;

use thiserror::Error;

/// Factors entering a Metropolis-Hastings style acceptance ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    /// Target (joint) density at the current point.
    TargetCurrent,
    /// Target (joint) density at the proposed point.
    TargetProposed,
    /// Forward proposal density for the y-move.
    ForwardY,
    /// Reverse proposal density for the y-move.
    ReverseY,
    /// Forward proposal density for the auxiliary move.
    ForwardU,
    /// Reverse proposal density for the auxiliary move.
    ReverseU,
    /// Refresh weight of the current auxiliary variable.
    CurrentWeight,
    /// Refresh weight of the candidate auxiliary variable.
    CandidateWeight,
    /// A caller-supplied Radon-Nikodym derivative.
    RadonNikodym,
    /// Jacobian of an involution.
    Jacobian,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Factor::TargetCurrent => "target density at the current point",
            Factor::TargetProposed => "target density at the proposed point",
            Factor::ForwardY => "forward y-proposal density",
            Factor::ReverseY => "reverse y-proposal density",
            Factor::ForwardU => "forward auxiliary proposal density",
            Factor::ReverseU => "reverse auxiliary proposal density",
            Factor::CurrentWeight => "weight of the current auxiliary variable",
            Factor::CandidateWeight => "weight of the candidate auxiliary variable",
            Factor::RadonNikodym => "Radon-Nikodym ratio",
            Factor::Jacobian => "involution Jacobian",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid state space: {0}")]
    InvalidSpace(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid function vector: {0}")]
    InvalidFunction(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("kernels are defined on different state spaces")]
    SpaceMismatch,
    #[error("kernel is not reversible: detailed balance violated by {violation:e} at ({row}, {col})")]
    NotReversible { row: usize, col: usize, violation: f64 },
    #[error("distribution is not invariant for the kernel (residual {residual:e})")]
    NotInvariant { residual: f64 },
    #[error("stationary behavior not unique: eigenvalue {eigenvalue} on the centered subspace")]
    StationaryNotUnique { eigenvalue: f64 },
    #[error("absolute summability condition fails: centered spectral radius {spectral_radius}")]
    SummabilityFails { spectral_radius: f64 },
    #[error("reducible kernel: eigenvalue 1 has multiplicity {multiplicity}")]
    Reducible { multiplicity: usize },
    #[error("kernel is not geometrically ergodic: second-largest eigenvalue modulus {modulus}")]
    NotGeometricallyErgodic { modulus: f64 },
    #[error("trace too short: length {len}, need at least {needed}")]
    TraceTooShort { len: usize, needed: usize },
    #[error("lag {lag} out of range for trace of length {len}")]
    LagOutOfRange { lag: usize, len: usize },
    #[error("parameter out of range: {0}")]
    InvalidParameter(String),
    #[error("{factor} is {value}")]
    BadDensity { factor: Factor, value: f64 },
    #[error("refresh kernel R is not sampleable for this model")]
    RefreshNotSampleable,
    #[error("refresh proposal and weights are not configured for this model")]
    WeightsNotConfigured,
    #[error("current state has zero ABC weight")]
    ZeroAbcWeight,
    #[error("all selection weights are zero")]
    ZeroSelectionWeights,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("algorithm {0} has no Markov y-marginal kernel")]
    NoMarginal(String),
    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
