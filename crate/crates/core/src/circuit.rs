//! Moment-structured circuits with a cached unitary.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{Action, ActionSpace, GateKind, MaskReason};
use crate::matrix::{embed_gate, ComplexMatrix};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacedGate {
    pub action: usize,
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub moment: usize,
}

/// Per-action mask verdict together with the placed gate that triggered it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaskHit {
    pub gate_index: usize,
    pub reason: MaskReason,
}

#[derive(Clone)]
pub struct QuantumCircuit {
    space: Arc<ActionSpace>,
    gates: Vec<PlacedGate>,
    unitary: ComplexMatrix,
    forward_commuting: Vec<bool>,
    gate_counts: [usize; 7],
    frontier: Vec<usize>,
}

impl fmt::Debug for QuantumCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumCircuit")
            .field("n_qubits", &self.n_qubits())
            .field("gates", &self.gates)
            .finish()
    }
}

impl PartialEq for QuantumCircuit {
    fn eq(&self, other: &Self) -> bool {
        self.n_qubits() == other.n_qubits() && self.gates == other.gates
    }
}

impl QuantumCircuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        Ok(Self::with_space(ActionSpace::for_qubits(n_qubits)?))
    }

    pub fn with_space(space: Arc<ActionSpace>) -> Self {
        let n = space.n_qubits();
        Self {
            space,
            gates: Vec::new(),
            unitary: ComplexMatrix::identity(1 << n),
            forward_commuting: Vec::new(),
            gate_counts: [0; 7],
            frontier: vec![0; n],
        }
    }

    pub fn from_actions(n_qubits: usize, actions: &[usize]) -> Result<Self> {
        let mut c = Self::new(n_qubits)?;
        for &a in actions {
            c.append(a)?;
        }
        Ok(c)
    }

    pub fn n_qubits(&self) -> usize {
        self.space.n_qubits()
    }

    pub fn space(&self) -> &Arc<ActionSpace> {
        &self.space
    }

    pub fn gates(&self) -> &[PlacedGate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    pub fn forward_commuting(&self) -> &[bool] {
        &self.forward_commuting
    }

    pub fn gate_counts(&self) -> &[usize; 7] {
        &self.gate_counts
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gate_counts[kind.index()]
    }

    pub fn t_count(&self) -> usize {
        self.count(GateKind::T) + self.count(GateKind::Tdg)
    }

    pub fn depth(&self) -> usize {
        self.frontier.iter().copied().max().unwrap_or(0)
    }

    /// Gates grouped by moment.
    pub fn moments(&self) -> Vec<Vec<&PlacedGate>> {
        let mut out: Vec<Vec<&PlacedGate>> = vec![Vec::new(); self.depth()];
        for g in &self.gates {
            out[g.moment].push(g);
        }
        for m in &mut out {
            m.sort_by_key(|g| g.qubits[0]);
        }
        out
    }

    /// Gates sorted by (moment, first qubit).
    pub fn canonical_gates(&self) -> Vec<PlacedGate> {
        self.moments().into_iter().flatten().cloned().collect()
    }

    pub fn action_indices(&self) -> Vec<usize> {
        self.gates.iter().map(|g| g.action).collect()
    }

    /// Places action `a` at the earliest moment where all its qubits are free.
    pub fn append(&mut self, a: usize) -> Result<()> {
        if a >= self.space.len() {
            return Err(Error::InvalidAction {
                action: a,
                reason: format!("only {} actions exist", self.space.len()),
            });
        }
        let action = self.space.action(a);
        let qubits = action.qubits();
        let moment = qubits.iter().map(|&q| self.frontier[q]).max().unwrap_or(0);
        for &q in qubits {
            self.frontier[q] = moment + 1;
        }
        for (i, g) in self.gates.iter().enumerate() {
            if self.forward_commuting[i]
                && g.qubits.iter().any(|q| qubits.contains(q))
                && !self.space.commutes(g.action, a)
            {
                self.forward_commuting[i] = false;
            }
        }
        self.unitary.apply_left(action.kind.kernel(), qubits);
        self.gate_counts[action.kind.index()] += 1;
        self.forward_commuting.push(true);
        self.gates.push(PlacedGate {
            action: a,
            kind: action.kind,
            qubits: qubits.to_vec(),
            moment,
        });
        Ok(())
    }

    pub fn with_appended(&self, a: usize) -> Result<Self> {
        let mut c = self.clone();
        c.append(a)?;
        Ok(c)
    }

    pub fn push_action(&mut self, action: Action) -> Result<()> {
        let idx = self.space.index_of(&action).ok_or_else(|| {
            Error::InvalidPlacement(format!("{action} is not a placement on {} qubit(s)", self.n_qubits()))
        })?;
        self.append(idx)
    }

    /// For each action, the first forward-commuting placed gate it would
    /// cancel against or merge with, if any.
    pub fn mask_hits(&self) -> Vec<Option<MaskHit>> {
        let na = self.space.len();
        let mut hits = vec![None; na];
        for (i, g) in self.gates.iter().enumerate() {
            if !self.forward_commuting[i] {
                continue;
            }
            for (b, hit) in hits.iter_mut().enumerate() {
                if hit.is_some() {
                    continue;
                }
                if let Some(reason) = self.space.blocks(b, g.action) {
                    *hit = Some(MaskHit { gate_index: i, reason });
                }
            }
        }
        hits
    }

    /// `true` for every action that is not masked.
    pub fn valid_actions(&self) -> Vec<bool> {
        self.mask_hits().iter().map(Option::is_none).collect()
    }

    /// Unitary rebuilt from scratch as a product of fully embedded kernels.
    pub fn naive_unitary(&self) -> ComplexMatrix {
        let n = self.n_qubits();
        self.gates.iter().fold(ComplexMatrix::identity(1 << n), |acc, g| {
            embed_gate(g.kind.kernel(), &g.qubits, n)
                .expect("placed gates are valid")
                .matmul(&acc)
        })
    }
}

/// JSON gate-list form of a circuit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CircuitFile {
    pub n_qubits: usize,
    pub gates: Vec<GateEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GateEntry {
    pub gate: String,
    pub qubits: Vec<usize>,
}

impl CircuitFile {
    pub fn from_circuit(c: &QuantumCircuit) -> Self {
        Self {
            n_qubits: c.n_qubits(),
            gates: c
                .canonical_gates()
                .into_iter()
                .map(|g| GateEntry {
                    gate: g.kind.qasm_name().to_string(),
                    qubits: g.qubits,
                })
                .collect(),
        }
    }

    pub fn to_circuit(&self) -> Result<QuantumCircuit> {
        let mut c = QuantumCircuit::new(self.n_qubits)?;
        for (i, g) in self.gates.iter().enumerate() {
            let kind = GateKind::from_qasm_name(&g.gate).ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("unknown gate `{}`", g.gate),
            })?;
            c.push_action(make_action(kind, &g.qubits).map_err(|msg| Error::Parse { line: i + 1, msg })?)?;
        }
        Ok(c)
    }
}

pub(crate) fn make_action(kind: GateKind, qubits: &[usize]) -> std::result::Result<Action, String> {
    if qubits.len() != kind.arity() {
        return Err(format!("{kind} takes {} qubit(s), got {}", kind.arity(), qubits.len()));
    }
    match kind {
        GateKind::CX if qubits[0] == qubits[1] => Err("cx control equals target".into()),
        GateKind::CX => Ok(Action::cx(qubits[0], qubits[1])),
        _ => Ok(Action::single(kind, qubits[0])),
    }
}
