//! Named structured unitaries used as spot-check targets.
//!
//! Two-qubit gates take qubit 0 as control and qubit 1 as target. Three-qubit
//! reversible gates act on basis states `|a b c⟩` with `a` on qubit 0.

use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use crate::matrix::ComplexMatrix;

/// A library entry with the best known T-count, `None` when the gate has no
/// exact ancilla-free Clifford+T realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Structured {
    pub name: &'static str,
    pub n_qubits: usize,
    pub t_count: Option<usize>,
}

pub const STRUCTURED: &[Structured] = &[
    Structured { name: "cv", n_qubits: 2, t_count: Some(3) },
    Structured { name: "cy", n_qubits: 2, t_count: Some(0) },
    Structured { name: "cz", n_qubits: 2, t_count: Some(0) },
    Structured { name: "swap", n_qubits: 2, t_count: Some(0) },
    Structured { name: "w", n_qubits: 2, t_count: Some(2) },
    Structured { name: "cp", n_qubits: 2, t_count: Some(3) },
    Structured { name: "ch", n_qubits: 2, t_count: Some(2) },
    Structured { name: "ct", n_qubits: 2, t_count: None },
    Structured { name: "toffoli", n_qubits: 3, t_count: Some(7) },
    Structured { name: "negated-toffoli", n_qubits: 3, t_count: Some(7) },
    Structured { name: "double-negated-toffoli", n_qubits: 3, t_count: Some(7) },
    Structured { name: "fredkin", n_qubits: 3, t_count: Some(7) },
    Structured { name: "peres", n_qubits: 3, t_count: Some(7) },
    Structured { name: "qor", n_qubits: 3, t_count: Some(7) },
    Structured { name: "and", n_qubits: 3, t_count: Some(7) },
    Structured { name: "tr", n_qubits: 3, t_count: Some(7) },
];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Block-diagonal `diag(I₂, kernel)`: the 1-qubit kernel controlled by qubit 0.
fn controlled(kernel: [[Complex64; 2]; 2]) -> ComplexMatrix {
    let mut m = ComplexMatrix::identity(4);
    for (r, row) in kernel.iter().enumerate() {
        for (col, &v) in row.iter().enumerate() {
            m.set(2 + r, 2 + col, v);
        }
    }
    m
}

fn reversible3(f: impl Fn(bool, bool, bool) -> (bool, bool, bool)) -> ComplexMatrix {
    ComplexMatrix::from_permutation(8, |i| {
        let (a, b, cc) = f(i & 4 != 0, i & 2 != 0, i & 1 != 0);
        (a as usize) << 2 | (b as usize) << 1 | cc as usize
    })
}

pub fn structured_unitary(name: &str) -> Option<ComplexMatrix> {
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let h = FRAC_1_SQRT_2;
    Some(match name {
        "cv" => controlled([[c(0.5, 0.5), c(0.5, -0.5)], [c(0.5, -0.5), c(0.5, 0.5)]]),
        "cy" => controlled([[zero, c(0.0, -1.0)], [c(0.0, 1.0), zero]]),
        "cz" => ComplexMatrix::from_diagonal(&[one, one, one, -one]),
        "swap" => ComplexMatrix::from_permutation(4, |i| ((i & 1) << 1) | (i >> 1)),
        "w" => {
            let mut m = ComplexMatrix::identity(4);
            m.set(1, 1, c(h, 0.0));
            m.set(1, 2, c(h, 0.0));
            m.set(2, 1, c(h, 0.0));
            m.set(2, 2, c(-h, 0.0));
            m
        }
        "cp" => ComplexMatrix::from_diagonal(&[one, one, one, c(0.0, 1.0)]),
        "ch" => controlled([[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]),
        "ct" => ComplexMatrix::from_diagonal(&[one, one, one, Complex64::from_polar(1.0, FRAC_PI_4)]),
        "toffoli" | "and" => reversible3(|a, b, x| (a, b, x ^ (a && b))),
        "negated-toffoli" => reversible3(|a, b, x| (a, b, x ^ (!a && b))),
        "double-negated-toffoli" => reversible3(|a, b, x| (a, b, x ^ (!a && !b))),
        "fredkin" => reversible3(|a, b, x| if a { (a, x, b) } else { (a, b, x) }),
        "peres" => reversible3(|a, b, x| (a, a ^ b, x ^ (a && b))),
        "qor" => reversible3(|a, b, x| (a, b, x ^ (a || b))),
        "tr" => reversible3(|a, b, x| (a, a ^ b, x ^ (a && !b))),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::QuantumCircuit;
    use crate::gates::{Action, GateKind};
    use crate::matrix::UNITARY_TOL;

    fn build(n: usize, actions: &[Action]) -> QuantumCircuit {
        let mut circ = QuantumCircuit::new(n).unwrap();
        for a in actions {
            circ.push_action(*a).unwrap();
        }
        circ
    }

    #[test]
    fn every_entry_is_unitary_with_the_declared_size() {
        for s in STRUCTURED {
            let u = structured_unitary(s.name).unwrap();
            assert_eq!(u.n_qubits(), s.n_qubits, "{}", s.name);
            assert!(u.is_unitary(UNITARY_TOL), "{}", s.name);
        }
        assert!(structured_unitary("nope").is_none());
    }

    #[test]
    fn textbook_decompositions_match() {
        use GateKind::*;
        let s = |k, q| Action::single(k, q);
        // CZ = (I⊗H) CX (I⊗H)
        let cz = build(2, &[s(H, 1), Action::cx(0, 1), s(H, 1)]);
        assert!(cz.unitary().equal_up_to_phase(&structured_unitary("cz").unwrap(), 1e-12));
        // controlled-S with three T gates
        let cp = build(2, &[s(T, 0), s(T, 1), Action::cx(0, 1), s(Tdg, 1), Action::cx(0, 1)]);
        assert!(cp.unitary().equal_up_to_phase(&structured_unitary("cp").unwrap(), 1e-12));
        assert_eq!(cp.t_count(), 3);
        // SWAP from three CX
        let sw = build(2, &[Action::cx(0, 1), Action::cx(1, 0), Action::cx(0, 1)]);
        assert!(sw.unitary().equal_up_to_phase(&structured_unitary("swap").unwrap(), 1e-12));
        // CY = (I⊗S) CX (I⊗S†)
        let cy = build(2, &[s(Sdg, 1), Action::cx(0, 1), s(S, 1)]);
        assert!(cy.unitary().equal_up_to_phase(&structured_unitary("cy").unwrap(), 1e-12));
    }

    #[test]
    fn standard_toffoli_has_seven_t_gates() {
        use GateKind::*;
        let s = |k, q| Action::single(k, q);
        let cx = Action::cx;
        let seq = [
            s(H, 2),
            cx(1, 2),
            s(Tdg, 2),
            cx(0, 2),
            s(T, 2),
            cx(1, 2),
            s(Tdg, 2),
            cx(0, 2),
            s(T, 1),
            s(T, 2),
            s(H, 2),
            cx(0, 1),
            s(T, 0),
            s(Tdg, 1),
            cx(0, 1),
        ];
        let c = build(3, &seq);
        assert_eq!(c.t_count(), 7);
        assert!(c
            .unitary()
            .equal_up_to_phase(&structured_unitary("toffoli").unwrap(), 1e-12));
    }

    #[test]
    fn reversible_gates_follow_their_truth_tables() {
        let peres = structured_unitary("peres").unwrap();
        // |110⟩ → |101⟩
        assert_eq!(peres.get(0b101, 0b110), c(1.0, 0.0));
        let fredkin = structured_unitary("fredkin").unwrap();
        assert_eq!(fredkin.get(0b110, 0b101), c(1.0, 0.0));
        let qor = structured_unitary("qor").unwrap();
        assert_eq!(qor.get(0b101, 0b100), c(1.0, 0.0));
        assert_eq!(qor.get(0b000, 0b000), c(1.0, 0.0));
    }
}
