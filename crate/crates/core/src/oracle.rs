//! Brute-force exact synthesis by iterative deepening over mask-valid action
//! sequences. Serves as ground truth for minimal gate counts on small cases.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::circuit::QuantumCircuit;
use crate::env::exact_match;
use crate::error::{Error, Result};
use crate::gates::ActionSpace;
use crate::matrix::{ComplexMatrix, UNITARY_TOL};
use crate::synth::ScoreKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_gates: usize,
    pub use_mask: bool,
    pub score_kind: ScoreKind,
    /// Prune revisits of a unitary already reached at no greater depth.
    pub transposition: bool,
}

impl OracleConfig {
    pub fn new(max_gates: usize) -> Self {
        Self {
            max_gates,
            use_mask: true,
            score_kind: ScoreKind::MinTotalGates,
            transposition: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub circuit: QuantumCircuit,
    pub gate_count: usize,
    pub t_count: usize,
    pub nodes_expanded: u64,
}

struct Search<'a> {
    target: &'a ComplexMatrix,
    cfg: &'a OracleConfig,
    order: &'a [usize],
    nodes: u64,
    /// Minimal-gates mode: shallowest depth at which each unitary was seen.
    seen_depth: HashMap<Vec<i64>, usize>,
    /// T-count mode: Pareto front of (depth, t) per unitary.
    seen_front: HashMap<Vec<i64>, Vec<(usize, usize)>>,
    best: Option<QuantumCircuit>,
}

impl Search<'_> {
    fn candidates(&self, c: &QuantumCircuit) -> Vec<usize> {
        if self.cfg.use_mask {
            let valid = c.valid_actions();
            self.order.iter().copied().filter(|&a| valid[a]).collect()
        } else {
            self.order.to_vec()
        }
    }

    /// Depth-limited search for a match at exactly `limit` gates.
    fn dfs_exact(&mut self, c: &QuantumCircuit, limit: usize) -> Option<QuantumCircuit> {
        self.nodes += 1;
        if c.len() == limit {
            return exact_match(self.target, c.unitary()).then(|| c.clone());
        }
        if self.cfg.transposition {
            let key = c.unitary().canonical_key();
            match self.seen_depth.get(&key) {
                Some(&d) if d <= c.len() => return None,
                _ => {
                    self.seen_depth.insert(key, c.len());
                }
            }
        }
        for a in self.candidates(c) {
            let next = c.with_appended(a).expect("action from the space");
            if let Some(found) = self.dfs_exact(&next, limit) {
                return Some(found);
            }
        }
        None
    }

    fn dominated(&mut self, c: &QuantumCircuit) -> bool {
        let key = c.unitary().canonical_key();
        let (d, t) = (c.len(), c.t_count());
        let front = self.seen_front.entry(key).or_default();
        if front.iter().any(|&(d0, t0)| d0 <= d && t0 <= t) {
            return true;
        }
        front.retain(|&(d0, t0)| !(d <= d0 && t <= t0));
        front.push((d, t));
        false
    }

    /// Full search up to `max_gates` keeping the lowest (T-count, gates) match.
    fn dfs_tcount(&mut self, c: &QuantumCircuit) {
        self.nodes += 1;
        if let Some(b) = &self.best {
            let key = (c.t_count(), c.len());
            if key >= (b.t_count(), b.len()) {
                return;
            }
        }
        if exact_match(self.target, c.unitary()) {
            self.best = Some(c.clone());
            return;
        }
        if c.len() == self.cfg.max_gates {
            return;
        }
        if self.cfg.transposition && self.dominated(c) {
            return;
        }
        for a in self.candidates(c) {
            let next = c.with_appended(a).expect("action from the space");
            self.dfs_tcount(&next);
        }
    }
}

/// Exhaustive synthesis of `u` within `cfg.max_gates`. Under
/// [`ScoreKind::MinTotalGates`] the first depth with a match is returned;
/// under [`ScoreKind::MinTCount`] the match with the fewest T gates (then
/// fewest gates) within the cap.
pub fn oracle_synthesize(u: &ComplexMatrix, cfg: &OracleConfig) -> Result<Option<OracleResult>> {
    let space = ActionSpace::for_qubits(u.n_qubits())?;
    let order: Vec<usize> = (0..space.len()).collect();
    oracle_with_order(u, cfg, &order)
}

fn oracle_with_order(u: &ComplexMatrix, cfg: &OracleConfig, order: &[usize]) -> Result<Option<OracleResult>> {
    if !u.is_unitary(UNITARY_TOL) {
        return Err(Error::Config("oracle target is not unitary".into()));
    }
    let space = ActionSpace::for_qubits(u.n_qubits())?;
    let root = QuantumCircuit::with_space(space);
    let mut search = Search {
        target: u,
        cfg,
        order,
        nodes: 0,
        seen_depth: HashMap::new(),
        seen_front: HashMap::new(),
        best: None,
    };
    let found = match cfg.score_kind {
        ScoreKind::MinTotalGates => {
            let mut found = None;
            for limit in 0..=cfg.max_gates {
                search.seen_depth.clear();
                if let Some(c) = search.dfs_exact(&root, limit) {
                    found = Some(c);
                    break;
                }
            }
            found
        }
        ScoreKind::MinTCount => {
            search.dfs_tcount(&root);
            search.best.take()
        }
    };
    Ok(found.map(|c| OracleResult {
        gate_count: c.len(),
        t_count: c.t_count(),
        circuit: c,
        nodes_expanded: search.nodes,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskCompletenessReport {
    pub n_qubits: usize,
    pub depth: usize,
    pub masked_sequences: u64,
    pub unmasked_sequences: u64,
    pub masked_unitaries: usize,
    pub unmasked_unitaries: usize,
    /// Unitaries reachable without the mask but not with it.
    pub missing: usize,
    /// Unitaries whose shortest masked sequence is longer than the shortest unmasked one.
    pub longer_with_mask: usize,
    pub identical: bool,
}

fn reachable(space: &std::sync::Arc<ActionSpace>, depth: usize, masked: bool) -> (u64, BTreeMap<Vec<i64>, usize>) {
    fn walk(
        c: &QuantumCircuit,
        depth: usize,
        masked: bool,
        count: &mut u64,
        seen: &mut BTreeMap<Vec<i64>, usize>,
    ) {
        *count += 1;
        let key = c.unitary().canonical_key();
        let e = seen.entry(key).or_insert(c.len());
        *e = (*e).min(c.len());
        if c.len() == depth {
            return;
        }
        let valid = if masked {
            c.valid_actions()
        } else {
            vec![true; c.space().len()]
        };
        for (a, ok) in valid.into_iter().enumerate() {
            if ok {
                walk(&c.with_appended(a).expect("valid index"), depth, masked, count, seen);
            }
        }
    }
    let mut count = 0;
    let mut seen = BTreeMap::new();
    walk(&QuantumCircuit::with_space(space.clone()), depth, masked, &mut count, &mut seen);
    (count, seen)
}

/// Compares the unitaries reachable in at most `depth` gates with and without
/// the action mask. Sequence counts include the empty sequence.
pub fn mask_completeness_check(n: usize, depth: usize) -> Result<MaskCompletenessReport> {
    if depth > 4 {
        return Err(Error::Config(format!("depth {depth} exceeds the exhaustive limit of 4")));
    }
    let space = ActionSpace::for_qubits(n)?;
    let (masked_sequences, masked) = reachable(&space, depth, true);
    let (unmasked_sequences, unmasked) = reachable(&space, depth, false);
    let masked_keys: HashSet<&Vec<i64>> = masked.keys().collect();
    let missing = unmasked.keys().filter(|k| !masked_keys.contains(k)).count();
    let longer_with_mask = unmasked
        .iter()
        .filter(|(k, &d)| masked.get(*k).is_some_and(|&dm| dm > d))
        .count();
    Ok(MaskCompletenessReport {
        n_qubits: n,
        depth,
        masked_sequences,
        unmasked_sequences,
        masked_unitaries: masked.len(),
        unmasked_unitaries: unmasked.len(),
        missing,
        longer_with_mask,
        identical: missing == 0 && masked.len() == unmasked.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{Action, GateKind};
    use crate::library::structured_unitary;

    #[test]
    fn identity_needs_no_gates() {
        let r = oracle_synthesize(&ComplexMatrix::identity(4), &OracleConfig::new(3))
            .unwrap()
            .unwrap();
        assert_eq!(r.gate_count, 0);
    }

    #[test]
    fn two_gate_product_has_minimal_count_two() {
        let mut c = QuantumCircuit::new(2).unwrap();
        c.push_action(Action::single(GateKind::T, 0)).unwrap();
        c.push_action(Action::single(GateKind::H, 1)).unwrap();
        let r = oracle_synthesize(c.unitary(), &OracleConfig::new(4)).unwrap().unwrap();
        assert_eq!(r.gate_count, 2);
        assert!(exact_match(c.unitary(), r.circuit.unitary()));
    }

    #[test]
    fn cz_is_clifford() {
        let cz = structured_unitary("cz").unwrap();
        let mut cfg = OracleConfig::new(4);
        cfg.score_kind = ScoreKind::MinTCount;
        let r = oracle_synthesize(&cz, &cfg).unwrap().unwrap();
        assert_eq!(r.t_count, 0);
        assert_eq!(r.gate_count, 3);
    }

    #[test]
    fn controlled_s_needs_three_t_gates() {
        let cp = structured_unitary("cp").unwrap();
        let mut cfg = OracleConfig::new(5);
        cfg.score_kind = ScoreKind::MinTCount;
        let r = oracle_synthesize(&cp, &cfg).unwrap().unwrap();
        assert_eq!(r.t_count, 3);
    }

    #[test]
    fn not_found_within_cap() {
        let ct = structured_unitary("ct").unwrap();
        assert!(oracle_synthesize(&ct, &OracleConfig::new(3)).unwrap().is_none());
    }

    #[test]
    fn transposition_and_order_do_not_change_the_minimum() {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let space = ActionSpace::for_qubits(2).unwrap();
        for _ in 0..15 {
            let target = crate::env::random_masked_circuit(&space, 3, &mut rng);
            let mut cfg = OracleConfig::new(3);
            let fast = oracle_synthesize(target.unitary(), &cfg).unwrap().unwrap();
            cfg.transposition = false;
            let slow = oracle_synthesize(target.unitary(), &cfg).unwrap().unwrap();
            cfg.use_mask = false;
            let raw = oracle_synthesize(target.unitary(), &cfg).unwrap().unwrap();
            let mut order: Vec<usize> = (0..space.len()).collect();
            order.shuffle(&mut rng);
            let shuffled = oracle_with_order(target.unitary(), &OracleConfig::new(3), &order)
                .unwrap()
                .unwrap();
            assert_eq!(fast.gate_count, slow.gate_count);
            assert_eq!(fast.gate_count, raw.gate_count);
            assert_eq!(fast.gate_count, shuffled.gate_count);
        }
    }

    #[test]
    fn masking_prunes_sequences_but_not_unitaries() {
        let r1 = mask_completeness_check(2, 1).unwrap();
        assert!(r1.identical);
        assert_eq!(r1.masked_sequences, r1.unmasked_sequences);
        let r2 = mask_completeness_check(2, 2).unwrap();
        assert!(r2.identical, "{r2:?}");
        assert!(r2.masked_sequences < r2.unmasked_sequences);
        assert_eq!(r2.unmasked_sequences, 1 + 14 + 14 * 14);
        assert!(mask_completeness_check(2, 5).is_err());
    }
}
