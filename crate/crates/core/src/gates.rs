//! The Clifford+T gate set and the placement (action) space over `n` qubits.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{embed_gate, ComplexMatrix};

/// Largest register size supported by the action tables.
pub const MAX_QUBITS: usize = 5;

/// Tolerance for the pairwise commutation / product tables.
pub const TABLE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    H,
    T,
    Tdg,
    S,
    Sdg,
    Z,
    CX,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [
        GateKind::H,
        GateKind::T,
        GateKind::Tdg,
        GateKind::S,
        GateKind::Sdg,
        GateKind::Z,
        GateKind::CX,
    ];

    pub const SINGLE_QUBIT: [GateKind; 6] = [
        GateKind::H,
        GateKind::T,
        GateKind::Tdg,
        GateKind::S,
        GateKind::Sdg,
        GateKind::Z,
    ];

    pub fn arity(self) -> usize {
        match self {
            GateKind::CX => 2,
            _ => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_t(self) -> bool {
        matches!(self, GateKind::T | GateKind::Tdg)
    }

    pub fn inverse(self) -> GateKind {
        match self {
            GateKind::T => GateKind::Tdg,
            GateKind::Tdg => GateKind::T,
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            k => k,
        }
    }

    /// Lower-case OpenQASM mnemonic.
    pub fn qasm_name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::Z => "z",
            GateKind::CX => "cx",
        }
    }

    pub fn from_qasm_name(name: &str) -> Option<GateKind> {
        GateKind::ALL
            .into_iter()
            .find(|k| k.qasm_name().eq_ignore_ascii_case(name))
    }

    pub fn kernel(self) -> &'static ComplexMatrix {
        static KERNELS: OnceLock<Vec<ComplexMatrix>> = OnceLock::new();
        &KERNELS.get_or_init(|| GateKind::ALL.iter().map(|k| k.build_kernel()).collect())
            [self.index()]
    }

    fn build_kernel(self) -> ComplexMatrix {
        let one = Complex64::new(1.0, 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            GateKind::H => ComplexMatrix::from_row_major(
                2,
                vec![
                    Complex64::new(r, 0.0),
                    Complex64::new(r, 0.0),
                    Complex64::new(r, 0.0),
                    Complex64::new(-r, 0.0),
                ],
            )
            .expect("2x2"),
            GateKind::T => ComplexMatrix::from_diagonal(&[one, Complex64::new(r, r)]),
            GateKind::Tdg => ComplexMatrix::from_diagonal(&[one, Complex64::new(r, -r)]),
            GateKind::S => ComplexMatrix::from_diagonal(&[one, Complex64::new(0.0, 1.0)]),
            GateKind::Sdg => ComplexMatrix::from_diagonal(&[one, Complex64::new(0.0, -1.0)]),
            GateKind::Z => ComplexMatrix::from_diagonal(&[one, -one]),
            GateKind::CX => {
                ComplexMatrix::from_permutation(4, |i| if i & 2 != 0 { i ^ 1 } else { i })
            }
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.qasm_name())
    }
}

/// One placement of a gate kind on concrete qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: GateKind,
    qubits: [usize; 2],
}

impl Action {
    pub fn single(kind: GateKind, qubit: usize) -> Self {
        assert_eq!(kind.arity(), 1);
        Self { kind, qubits: [qubit, qubit] }
    }

    pub fn cx(control: usize, target: usize) -> Self {
        assert_ne!(control, target, "CX control and target must differ");
        Self {
            kind: GateKind::CX,
            qubits: [control, target],
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn overlaps(&self, other: &Action) -> bool {
        self.qubits().iter().any(|q| other.qubits().contains(q))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let qs: Vec<String> = self.qubits().iter().map(|q| format!("q[{q}]")).collect();
        write!(f, "{} {}", self.kind, qs.join(","))
    }
}

/// Why a pair of gates must not be placed back to back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskReason {
    /// `B·A = I`.
    Cancellation,
    /// `B·A` equals the gate at this action index.
    Redundancy(usize),
}

/// Enumerated placements for an `n`-qubit register plus the static pairwise
/// tables used for forward commutation and masking.
///
/// Ordering is kind-major (H, T, Tdg, S, Sdg, Z, then CX) and
/// qubit-lexicographic within a kind.
pub struct ActionSpace {
    n_qubits: usize,
    actions: Vec<Action>,
    commute: Vec<bool>,
    blocks: Vec<Option<MaskReason>>,
}

impl fmt::Debug for ActionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionSpace")
            .field("n_qubits", &self.n_qubits)
            .field("n_actions", &self.actions.len())
            .finish()
    }
}

impl ActionSpace {
    /// Shared, lazily built action space for `n` qubits (`1 ≤ n ≤ 5`).
    pub fn for_qubits(n: usize) -> Result<Arc<ActionSpace>> {
        static SPACES: OnceLock<Vec<OnceLock<Arc<ActionSpace>>>> = OnceLock::new();
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Config(format!(
                "qubit count must be in [1, {MAX_QUBITS}], got {n}"
            )));
        }
        let slots = SPACES.get_or_init(|| (0..MAX_QUBITS).map(|_| OnceLock::new()).collect());
        Ok(slots[n - 1].get_or_init(|| Arc::new(ActionSpace::build(n))).clone())
    }

    fn build(n: usize) -> Self {
        let mut actions = Vec::new();
        for kind in GateKind::SINGLE_QUBIT {
            for q in 0..n {
                actions.push(Action::single(kind, q));
            }
        }
        for c in 0..n {
            for t in 0..n {
                if c != t {
                    actions.push(Action::cx(c, t));
                }
            }
        }
        let na = actions.len();
        let mut commute = vec![true; na * na];
        let mut blocks = vec![None; na * na];
        for (i, a) in actions.iter().enumerate() {
            for (j, b) in actions.iter().enumerate() {
                if !a.overlaps(b) {
                    continue;
                }
                let (ea, eb, support) = joint_embedding(a, b);
                let ab = ea.matmul(&eb);
                let ba = eb.matmul(&ea);
                commute[i * na + j] = ab.approx_eq(&ba, TABLE_TOL);
                // row = later gate B (index j), column = earlier gate A (index i)
                blocks[j * na + i] = if ba.is_identity(TABLE_TOL) {
                    Some(MaskReason::Cancellation)
                } else {
                    actions
                        .iter()
                        .position(|c| {
                            c.qubits().iter().all(|q| support.contains(q))
                                && local_embed(c, &support).approx_eq(&ba, TABLE_TOL)
                        })
                        .map(MaskReason::Redundancy)
                };
            }
        }
        Self {
            n_qubits: n,
            actions,
            commute,
            blocks,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    /// Whether the gates of the two actions commute as operators.
    pub fn commutes(&self, a: usize, b: usize) -> bool {
        self.commute[a * self.actions.len() + b]
    }

    /// Mask rule for placing `later` directly after `earlier`.
    pub fn blocks(&self, later: usize, earlier: usize) -> Option<MaskReason> {
        self.blocks[later * self.actions.len() + earlier]
    }
}

/// Expected `6n + n(n-1)`.
pub fn action_count(n: usize) -> usize {
    6 * n + n * (n - 1)
}

fn local_embed(action: &Action, support: &[usize]) -> ComplexMatrix {
    let local: Vec<usize> = action
        .qubits()
        .iter()
        .map(|q| support.iter().position(|s| s == q).expect("qubit in support"))
        .collect();
    embed_gate(action.kind.kernel(), &local, support.len()).expect("valid local placement")
}

fn joint_embedding(a: &Action, b: &Action) -> (ComplexMatrix, ComplexMatrix, Vec<usize>) {
    let mut support: Vec<usize> = a.qubits().iter().chain(b.qubits()).copied().collect();
    support.sort_unstable();
    support.dedup();
    (local_embed(a, &support), local_embed(b, &support), support)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(kind: GateKind) -> &'static ComplexMatrix {
        kind.kernel()
    }

    #[test]
    fn kernel_identities_hold() {
        let i2 = ComplexMatrix::identity(2);
        assert!(k(GateKind::T).matmul(k(GateKind::T)).approx_eq(k(GateKind::S), 1e-15));
        assert!(k(GateKind::S).matmul(k(GateKind::S)).approx_eq(k(GateKind::Z), 1e-15));
        assert!(k(GateKind::H).matmul(k(GateKind::H)).approx_eq(&i2, 1e-15));
        for kind in GateKind::ALL {
            let id = ComplexMatrix::identity(kind.kernel().dim());
            assert!(k(kind).matmul(k(kind.inverse())).approx_eq(&id, 1e-15), "{kind}");
            assert!(k(kind).is_unitary(1e-15));
        }
    }

    #[test]
    fn action_counts_follow_formula() {
        for (n, expected) in [(1, 6), (2, 14), (3, 24), (4, 36), (5, 50)] {
            let space = ActionSpace::for_qubits(n).unwrap();
            assert_eq!(space.len(), expected);
            assert_eq!(action_count(n), expected);
        }
        assert!(ActionSpace::for_qubits(0).is_err());
        assert!(ActionSpace::for_qubits(6).is_err());
    }

    #[test]
    fn ordering_is_kind_major() {
        let space = ActionSpace::for_qubits(2).unwrap();
        let names: Vec<String> = space.actions().iter().map(|a| a.to_string()).collect();
        assert_eq!(names[0], "h q[0]");
        assert_eq!(names[1], "h q[1]");
        assert_eq!(names[2], "t q[0]");
        assert_eq!(names[3], "t q[1]");
        assert_eq!(names[12], "cx q[0],q[1]");
        assert_eq!(names[13], "cx q[1],q[0]");
    }

    #[test]
    fn commutation_table_examples() {
        let space = ActionSpace::for_qubits(2).unwrap();
        let idx = |a: Action| space.index_of(&a).unwrap();
        let t0 = idx(Action::single(GateKind::T, 0));
        let t1 = idx(Action::single(GateKind::T, 1));
        let h0 = idx(Action::single(GateKind::H, 0));
        let cx01 = idx(Action::cx(0, 1));
        assert!(space.commutes(t0, cx01), "diagonal gate on control commutes");
        assert!(!space.commutes(t1, cx01), "T on target does not commute");
        assert!(!space.commutes(h0, t0));
        assert!(space.commutes(h0, t1));
    }

    #[test]
    fn block_table_examples() {
        let space = ActionSpace::for_qubits(1).unwrap();
        let idx = |kind| space.index_of(&Action::single(kind, 0)).unwrap();
        let (t, tdg, s, sdg, z, h) = (
            idx(GateKind::T),
            idx(GateKind::Tdg),
            idx(GateKind::S),
            idx(GateKind::Sdg),
            idx(GateKind::Z),
            idx(GateKind::H),
        );
        assert_eq!(space.blocks(tdg, t), Some(MaskReason::Cancellation));
        assert_eq!(space.blocks(t, t), Some(MaskReason::Redundancy(s)));
        assert_eq!(space.blocks(sdg, t), Some(MaskReason::Redundancy(tdg)));
        assert_eq!(space.blocks(s, s), Some(MaskReason::Redundancy(z)));
        assert_eq!(space.blocks(h, h), Some(MaskReason::Cancellation));
        assert_eq!(space.blocks(h, t), None);
        assert_eq!(space.blocks(z, t), None);
    }
}
