use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AcceptCounts, RngStream, Stepper, RNG_ALGORITHM};
use crate::error::{Error, Result};

/// A recorded chain: projected states, per-step acceptance flags and the
/// metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub algorithm: String,
    pub model: String,
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
    pub columns: Vec<String>,
    /// `n + 1` rows; row 0 is the initial state.
    pub states: Vec<Vec<f64>>,
    /// `accepted[k]` refers to the step producing row `k + 1`.
    pub accepted: Vec<bool>,
    pub accept_counts: AcceptCounts,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Column `j` of the projected states.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[j]).collect()
    }

    /// CSV with header `step,<columns>,accepted`; the initial row has an
    /// empty accepted flag.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",accepted\n");
        for (k, row) in self.states.iter().enumerate() {
            let _ = write!(out, "{k}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            match k.checked_sub(1).map(|i| self.accepted[i]) {
                Some(flag) => {
                    let _ = writeln!(out, ",{}", u8::from(flag));
                }
                None => out.push_str(",\n"),
            }
        }
        out
    }

    /// Metadata document (everything but the states).
    pub fn metadata_json(&self) -> Result<String> {
        let meta = serde_json::json!({
            "algorithm": self.algorithm,
            "model": self.model,
            "seed": self.seed,
            "stream": self.stream,
            "rng": self.rng,
            "columns": self.columns,
            "length": self.states.len(),
            "accept_counts": self.accept_counts,
        });
        serde_json::to_string_pretty(&meta).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Runs `n` steps from `initial`, recording `project(state)` at every step.
pub fn run_chain<S: Stepper>(
    stepper: &S,
    model: &str,
    initial: S::State,
    n: usize,
    stream: RngStream,
    columns: &[&str],
    project: &dyn Fn(&S::State) -> Vec<f64>,
) -> Result<ChainTrace> {
    let mut rng = stream.rng();
    let mut counts = AcceptCounts::default();
    let mut states = Vec::with_capacity(n + 1);
    let mut accepted = Vec::with_capacity(n);
    states.push(project(&initial));
    let mut current = initial;
    for _ in 0..n {
        let t = stepper.step(&current, &mut counts, &mut rng)?;
        states.push(project(&t.state));
        accepted.push(t.accepted);
        current = t.state;
    }
    Ok(ChainTrace {
        algorithm: stepper.name().to_string(),
        model: model.to_string(),
        seed: stream.seed,
        stream: stream.stream,
        rng: RNG_ALGORITHM.to_string(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        states,
        accepted,
        accept_counts: counts,
    })
}

/// Runs `n` steps recording only the scalar `f(state)`; the returned vector
/// has `n + 1` entries. Cheaper than [`run_chain`] for long estimation runs.
pub fn run_scalar<S: Stepper>(
    stepper: &S,
    initial: S::State,
    n: usize,
    stream: RngStream,
    f: &dyn Fn(&S::State) -> f64,
) -> Result<(Vec<f64>, AcceptCounts)> {
    let mut rng = stream.rng();
    let mut counts = AcceptCounts::default();
    let mut out = Vec::with_capacity(n + 1);
    out.push(f(&initial));
    let mut current = initial;
    for _ in 0..n {
        current = stepper.step(&current, &mut counts, &mut rng)?.state;
        out.push(f(&current));
    }
    Ok((out, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::two_state_q0;
    use crate::sampler::MatrixChain;

    fn q0_trace(n: usize, seed: u64) -> ChainTrace {
        let k = two_state_q0(0.5).unwrap();
        let signs = [-1.0, 1.0];
        run_chain(&MatrixChain { kernel: &k }, "q0", 0, n, RngStream::new(seed, 0), &["y"], &|s: &usize| {
            vec![signs[*s]]
        })
        .unwrap()
    }

    #[test]
    fn zero_steps_keeps_initial_state() {
        let t = q0_trace(0, 1);
        assert_eq!(t.len(), 1);
        assert!(t.accepted.is_empty());
        assert_eq!(t.to_csv(), "step,y,accepted\n0,-1,\n");
    }

    #[test]
    fn identical_seeds_identical_traces() {
        assert_eq!(q0_trace(500, 9), q0_trace(500, 9));
        assert_ne!(q0_trace(500, 9).states, q0_trace(500, 10).states);
    }

    #[test]
    fn metadata_round_trips() {
        let t = q0_trace(10, 2);
        let v: serde_json::Value = serde_json::from_str(&t.metadata_json().unwrap()).unwrap();
        assert_eq!(v["rng"], "chacha20");
        assert_eq!(v["length"], 11);
        let back: ChainTrace = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn q0_chain_batch_means_and_lag_one() {
        let t = q0_trace(1_000_000, 77);
        let y = t.column(0);
        let v = crate::variance::batch_means_variance(&y, 1000).unwrap().value;
        assert!((v - 1.0 / 3.0).abs() < 1.0 / 30.0, "batch means {v}");
        let c = crate::variance::empirical_autocov(&y, 1).unwrap();
        assert!((c + 0.5).abs() < 0.025, "lag one {c}");
    }
}
