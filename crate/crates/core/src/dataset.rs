//! Rejection-sampled target datasets with an exact T-count or gate count.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{random_masked_circuit, TargetRecord};
use crate::error::{Error, Result};
use crate::gates::ActionSpace;
use crate::{derive_seed, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub n_qubits: usize,
    pub count: usize,
    /// Required T-count of the generating circuit.
    pub t_gates: Option<usize>,
    /// Required gate count of the generating circuit.
    pub total_gates: Option<usize>,
    /// Gate-count range sampled when `total_gates` is not fixed; its upper
    /// end also caps `total_gates`.
    pub gate_range: (usize, usize),
    pub seed: u64,
    pub max_attempts: u64,
}

impl TargetSpec {
    pub fn new(n_qubits: usize, count: usize, seed: u64) -> Self {
        Self {
            n_qubits,
            count,
            t_gates: None,
            total_gates: None,
            gate_range: (3, if n_qubits >= 5 { 40 } else { 60 }),
            seed,
            max_attempts: 200_000,
        }
    }
}

/// Draws random masked circuits until `count` pairwise-distinct unitaries
/// (up to global phase) satisfy the requested statistics. The record's
/// `seed` regenerates its circuit exactly.
pub fn generate_targets(spec: &TargetSpec) -> Result<Vec<TargetRecord>> {
    if spec.t_gates.is_none() && spec.total_gates.is_none() {
        return Err(Error::Config("one of t_gates or total_gates is required".into()));
    }
    let (lo, hi) = spec.gate_range;
    if lo > hi {
        return Err(Error::Config(format!("empty gate range [{lo}, {hi}]")));
    }
    if let Some(m) = spec.total_gates.filter(|&m| m > hi) {
        return Err(Error::Config(format!("total_gates {m} exceeds the gate cap {hi}")));
    }
    let space = ActionSpace::for_qubits(spec.n_qubits)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(spec.count);
    let mut attempt = 0u64;
    while out.len() < spec.count {
        if attempt >= spec.max_attempts {
            return Err(Error::GenerationStalled {
                attempts: attempt,
                found: out.len(),
                requested: spec.count,
            });
        }
        let seed = derive_seed(spec.seed, streams::DATASET, attempt);
        attempt += 1;
        let c = sample_circuit(&space, spec, seed);
        if spec.t_gates.is_some_and(|t| c.t_count() != t) {
            continue;
        }
        if seen.insert(c.unitary().canonical_key()) {
            out.push(TargetRecord::from_circuit(&c, seed));
        }
    }
    Ok(out)
}

fn sample_circuit(
    space: &std::sync::Arc<ActionSpace>,
    spec: &TargetSpec,
    seed: u64,
) -> crate::circuit::QuantumCircuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = match spec.total_gates {
        Some(m) => m,
        None => rng.random_range(spec.gate_range.0..=spec.gate_range.1),
    };
    random_masked_circuit(space, m, &mut rng)
}

/// Recreates the circuit behind a record from its seed and spec.
pub fn regenerate(spec: &TargetSpec, record: &TargetRecord) -> Result<crate::circuit::QuantumCircuit> {
    let space = ActionSpace::for_qubits(spec.n_qubits)?;
    Ok(sample_circuit(&space, spec, record.seed))
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[TargetRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TargetRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clifford_only_targets_are_distinct() {
        let mut spec = TargetSpec::new(2, 50, 1);
        spec.t_gates = Some(0);
        let recs = generate_targets(&spec).unwrap();
        assert_eq!(recs.len(), 50);
        let mut keys = HashSet::new();
        for r in &recs {
            assert_eq!(r.t_count, 0);
            let c = r.circuit().unwrap();
            assert_eq!(c.t_count(), 0);
            assert!(keys.insert(c.unitary().canonical_key()));
            assert_eq!(regenerate(&spec, r).unwrap().unitary(), c.unitary());
        }
    }

    #[test]
    fn total_gate_targets_honor_the_count() {
        let mut spec = TargetSpec::new(5, 3, 2);
        spec.total_gates = Some(40);
        for r in generate_targets(&spec).unwrap() {
            assert_eq!(r.gate_count, 40);
            assert_eq!(r.n_qubits, 5);
        }
        spec.total_gates = Some(41);
        assert!(matches!(generate_targets(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn unsatisfiable_statistics_stall() {
        let mut spec = TargetSpec::new(2, 1, 0);
        spec.t_gates = Some(1);
        spec.total_gates = Some(0);
        spec.max_attempts = 500;
        assert!(matches!(generate_targets(&spec), Err(Error::GenerationStalled { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut spec = TargetSpec::new(2, 4, 3);
        spec.total_gates = Some(5);
        let recs = generate_targets(&spec).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), recs);
    }
}
