//! Machine-readable results. Complex numbers are `[re, im]` pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInfo {
    pub n: usize,
    pub k: usize,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    /// `null` when only bounds are available.
    pub eta: Option<f64>,
    pub residual_norm: f64,
    pub bounds: BTreeMap<String, f64>,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub problem: ProblemInfo,
    pub lambdas: Vec<[f64; 2]>,
    /// Frobenius norm of each coefficient perturbation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub term_norms: Vec<f64>,
    /// Command-specific details, e.g. continuation stages.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(command: &str, problem: ProblemInfo, lambdas: &[C64]) -> Self {
        Report {
            command: command.into(),
            eta: None,
            residual_norm: 0.0,
            bounds: BTreeMap::new(),
            timings: BTreeMap::new(),
            problem,
            lambdas: lambdas.iter().map(|z| complex_pair(*z)).collect(),
            term_norms: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text rendering for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{}: n = {}, k = {}, p = {}\n",
            self.command, self.problem.n, self.problem.k, self.problem.p
        );
        for (i, l) in self.lambdas.iter().enumerate() {
            out.push_str(&format!("  lambda[{i}] = {:+.15e} {:+.15e}i\n", l[0], l[1]));
        }
        if let Some(eta) = self.eta {
            out.push_str(&format!("  {:<24} {eta:.6e}\n", "eta"));
        }
        out.push_str(&format!("  {:<24} {:.6e}\n", "residual_norm", self.residual_norm));
        for (k, v) in &self.bounds {
            out.push_str(&format!("  {:<24} {v:.6e}\n", k));
        }
        for (j, v) in self.term_norms.iter().enumerate() {
            out.push_str(&format!("  {:<24} {v:.6e}\n", format!("norm(dF{j})")));
        }
        for (k, v) in &self.timings {
            out.push_str(&format!("  {:<24} {v:.3}s\n", format!("time.{k}")));
        }
        out
    }
}

pub fn complex_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}
