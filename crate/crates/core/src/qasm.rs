//! OpenQASM 2.0 subset: `h t tdg s sdg z cx` on a single quantum register.

use std::fmt::Write as _;

use crate::circuit::{make_action, QuantumCircuit};
use crate::error::{Error, Result};
use crate::gates::GateKind;

pub fn emit_qasm(c: &QuantumCircuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\n");
    out.push_str("include \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", c.n_qubits());
    for g in c.canonical_gates() {
        let args: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, "{} {};", g.kind.qasm_name(), args.join(","));
    }
    out
}

/// Parses the subset produced by [`emit_qasm`]. Gates are appended in file order.
pub fn parse_qasm(text: &str) -> Result<QuantumCircuit> {
    let mut circuit: Option<QuantumCircuit> = None;
    let mut reg_name = String::new();

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.split("//").next().unwrap_or("").trim();
        for stmt in line.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let (head, rest) = match stmt.split_once(char::is_whitespace) {
                Some((h, r)) => (h, r.trim()),
                None => (stmt, ""),
            };
            match head {
                "OPENQASM" | "include" | "barrier" => continue,
                "qreg" => {
                    if circuit.is_some() {
                        return Err(perr("only one qreg is supported".into()));
                    }
                    let (name, size) = parse_indexed(rest).map_err(perr)?;
                    reg_name = name.to_string();
                    circuit = Some(QuantumCircuit::new(size).map_err(|e| perr(e.to_string()))?);
                }
                "creg" => continue,
                name => {
                    let kind = GateKind::from_qasm_name(name)
                        .ok_or_else(|| perr(format!("unsupported gate `{name}`")))?;
                    let c = circuit
                        .as_mut()
                        .ok_or_else(|| perr("gate before qreg declaration".into()))?;
                    let mut qubits = Vec::new();
                    for arg in rest.split(',') {
                        let (reg, q) = parse_indexed(arg.trim()).map_err(perr)?;
                        if reg != reg_name {
                            return Err(perr(format!("unknown register `{reg}`")));
                        }
                        if q >= c.n_qubits() {
                            return Err(perr(format!("qubit index {q} out of range")));
                        }
                        qubits.push(q);
                    }
                    let action = make_action(kind, &qubits).map_err(perr)?;
                    c.push_action(action).map_err(|e| perr(e.to_string()))?;
                }
            }
        }
    }
    circuit.ok_or(Error::Parse {
        line: 0,
        msg: "no qreg declaration".into(),
    })
}

fn parse_indexed(s: &str) -> std::result::Result<(&str, usize), String> {
    let open = s.find('[').ok_or_else(|| format!("expected `name[index]`, got `{s}`"))?;
    let close = s.rfind(']').ok_or_else(|| format!("missing `]` in `{s}`"))?;
    let name = s[..open].trim();
    let idx = s[open + 1..close]
        .trim()
        .parse()
        .map_err(|_| format!("bad index in `{s}`"))?;
    Ok((name, idx))
}
