use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FiniteKernel, ProbVector, StateSpace};
use crate::error::{Error, Result};

/// JSON form of a kernel together with its reference distribution:
/// `{"labels": [...], "pi": [...], "matrix": [[...], ...]}`, rows in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub labels: Vec<String>,
    pub pi: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
}

impl KernelDocument {
    pub fn from_kernel(kernel: &FiniteKernel, pi: &ProbVector) -> Self {
        let n = kernel.size();
        Self {
            labels: kernel.space().labels().to_vec(),
            pi: pi.weights().to_vec(),
            matrix: (0..n).map(|i| (0..n).map(|j| kernel.entry(i, j)).collect()).collect(),
            algorithm: None,
        }
    }

    pub fn with_algorithm(mut self, algorithm: impl Into<String>) -> Self {
        self.algorithm = Some(algorithm.into());
        self
    }

    /// Validates every invariant and returns the typed pair.
    pub fn into_parts(self) -> Result<(FiniteKernel, ProbVector)> {
        let space = Arc::new(StateSpace::new(self.labels)?);
        let n = space.size();
        if self.matrix.len() != n || self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidKernel(format!("matrix must be {n}x{n}")));
        }
        if self.pi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.pi.len() });
        }
        let flat: Vec<f64> = self.matrix.into_iter().flatten().collect();
        let kernel = FiniteKernel::new(space, DMatrix::from_row_slice(n, n, &flat))?;
        Ok((kernel, ProbVector::new(self.pi)?))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}
