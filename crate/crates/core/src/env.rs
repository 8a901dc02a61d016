//! The synthesis MDP: target sampling, observation, reward and action masking.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{MaskHit, QuantumCircuit};
use crate::error::{Error, Result};
use crate::gates::ActionSpace;
use crate::matrix::ComplexMatrix;
use crate::qasm::emit_qasm;

/// Default cost threshold below which an episode terminates.
pub const SUCCESS_THRESHOLD: f64 = 0.1;

/// Tolerance on `|Tr(V†U)|/2^n` for an exact match.
pub const EXACT_MATCH_TOL: f64 = 1e-9;

/// Hilbert-Schmidt cost `1 - |Tr(V†U)|² / 4^n`, clamped to `[0, 1]`.
pub fn hs_cost(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Shape(format!(
            "cannot compare {0}x{0} with {1}x{1}",
            u.dim(),
            v.dim()
        )));
    }
    let d = u.dim() as f64;
    let overlap = v.hs_inner(u).norm_sqr() / (d * d);
    Ok((1.0 - overlap).clamp(0.0, 1.0))
}

/// Global-phase-invariant exact match.
pub fn exact_match(u: &ComplexMatrix, v: &ComplexMatrix) -> bool {
    u.equal_up_to_phase(v, EXACT_MATCH_TOL)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_qubits: usize,
    pub gate_min: usize,
    pub gate_max: usize,
    pub max_steps: usize,
    pub success_threshold: f64,
}

impl EnvConfig {
    /// Config with `max_steps = 2 · gate_max` and the default threshold.
    pub fn new(n_qubits: usize, gate_min: usize, gate_max: usize) -> Self {
        Self {
            n_qubits,
            gate_min,
            gate_max,
            max_steps: 2 * gate_max,
            success_threshold: SUCCESS_THRESHOLD,
        }
    }

    /// Sampling range used for full-size models: `[3, 60]`, or `[3, 40]` at five qubits.
    pub fn full_scale(n_qubits: usize) -> Self {
        let max = if n_qubits >= 5 { 40 } else { 60 };
        Self::new(n_qubits, 3, max)
    }

    pub fn validate(&self) -> Result<()> {
        ActionSpace::for_qubits(self.n_qubits)?;
        if self.gate_min < 1 || self.gate_min > self.gate_max {
            return Err(Error::Config(format!(
                "gate range [{}, {}] must satisfy 1 <= min <= max",
                self.gate_min, self.gate_max
            )));
        }
        if self.max_steps < self.gate_max {
            return Err(Error::Config(format!(
                "max_steps {} is smaller than gate_max {}",
                self.max_steps, self.gate_max
            )));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold <= 1.0) {
            return Err(Error::Config("success threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    pub valid: Vec<bool>,
}

impl ActionMask {
    pub fn all_valid(n: usize) -> Self {
        Self { valid: vec![true; n] }
    }

    pub fn is_valid(&self, a: usize) -> bool {
        self.valid.get(a).copied().unwrap_or(false)
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, v)| **v).map(|(i, _)| i)
    }
}

#[derive(Clone, Debug)]
pub struct EnvState {
    pub time_step: usize,
    pub circuit: QuantumCircuit,
    pub action_history: Vec<usize>,
    /// Generating circuit, when the target was sampled rather than supplied.
    pub target_circuit: Option<QuantumCircuit>,
    pub target_action_history: Vec<usize>,
    pub target_unitary: Arc<ComplexMatrix>,
    pub fidelity: f64,
    pub rng_key: u64,
    pub done: bool,
    /// Set when the episode ended on an exact (phase-invariant) match.
    pub solved: bool,
    pub mask: ActionMask,
}

impl EnvState {
    pub fn cost(&self) -> f64 {
        1.0 - self.fidelity
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub mask: ActionMask,
}

#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    space: Arc<ActionSpace>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let space = ActionSpace::for_qubits(config.n_qubits)?;
        Ok(Self { config, space })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn space(&self) -> &Arc<ActionSpace> {
        &self.space
    }

    pub fn n_actions(&self) -> usize {
        self.space.len()
    }

    pub fn observation_len(&self) -> usize {
        2 << (2 * self.config.n_qubits)
    }

    /// Random masked circuit with a gate count drawn uniformly from the configured range.
    pub fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> QuantumCircuit {
        let m = rng.random_range(self.config.gate_min..=self.config.gate_max);
        random_masked_circuit(&self.space, m, rng)
    }

    /// Fresh episode on a sampled target. `rng_key` is recorded for provenance.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R, rng_key: u64) -> EnvState {
        let target = self.sample_target(rng);
        let u = Arc::new(target.unitary().clone());
        let mut s = self.initial_state(u, rng_key);
        s.target_action_history = target.action_indices();
        s.target_circuit = Some(target);
        s
    }

    /// Fresh episode on a given target unitary.
    pub fn reset_to(&self, target: &ComplexMatrix, rng_key: u64) -> Result<EnvState> {
        if target.n_qubits() != self.config.n_qubits {
            return Err(Error::Config(format!(
                "target acts on {} qubit(s) but the environment has {}",
                target.n_qubits(),
                self.config.n_qubits
            )));
        }
        Ok(self.initial_state(Arc::new(target.clone()), rng_key))
    }

    fn initial_state(&self, u: Arc<ComplexMatrix>, rng_key: u64) -> EnvState {
        let circuit = QuantumCircuit::with_space(self.space.clone());
        let cost = hs_cost(&u, circuit.unitary()).expect("same dimension");
        let done = cost < self.config.success_threshold;
        let solved = done && exact_match(&u, circuit.unitary());
        EnvState {
            time_step: 0,
            mask: ActionMask::all_valid(self.space.len()),
            circuit,
            action_history: Vec::new(),
            target_circuit: None,
            target_action_history: Vec::new(),
            target_unitary: u,
            fidelity: 1.0 - cost,
            rng_key,
            done,
            solved,
        }
    }

    /// `U·V†` split into real then imaginary parts, each row-major.
    pub fn observe(&self, s: &EnvState) -> Vec<f64> {
        let residual = s.target_unitary.mul_adjoint(s.circuit.unitary());
        let data = residual.as_slice();
        let mut obs = Vec::with_capacity(2 * data.len());
        obs.extend(data.iter().map(|z| z.re));
        obs.extend(data.iter().map(|z| z.im));
        obs
    }

    pub fn action_mask(&self, s: &EnvState) -> ActionMask {
        ActionMask {
            valid: s.circuit.valid_actions(),
        }
    }

    pub fn mask_hits(&self, s: &EnvState) -> Vec<Option<MaskHit>> {
        s.circuit.mask_hits()
    }

    pub fn step(&self, s: &EnvState, a: usize) -> Result<StepOutcome> {
        if s.done {
            return Err(Error::EpisodeFinished);
        }
        if a >= self.space.len() {
            return Err(Error::InvalidAction {
                action: a,
                reason: format!("only {} actions exist", self.space.len()),
            });
        }
        if !s.mask.is_valid(a) {
            return Err(Error::InvalidAction {
                action: a,
                reason: "masked by cancellation or redundancy".into(),
            });
        }
        let mut next = s.clone();
        next.circuit.append(a)?;
        next.action_history.push(a);
        next.time_step += 1;
        let cost = hs_cost(&next.target_unitary, next.circuit.unitary())?;
        next.fidelity = 1.0 - cost;
        let hit = cost < self.config.success_threshold;
        let timeout = next.time_step >= self.config.max_steps;
        next.done = hit || timeout;
        next.solved = hit && exact_match(&next.target_unitary, next.circuit.unitary());
        next.mask = self.action_mask(&next);
        if !next.done && next.mask.count_valid() == 0 {
            return Err(Error::InvalidAction {
                action: a,
                reason: "reached a state with no valid action".into(),
            });
        }
        let reward = if hit { 0.0 } else { -1.0 };
        let mask = next.mask.clone();
        Ok(StepOutcome {
            done: next.done,
            state: next,
            reward,
            mask,
        })
    }
}

/// Appends `m` uniformly random valid actions to an empty circuit.
pub fn random_masked_circuit<R: Rng + ?Sized>(
    space: &Arc<ActionSpace>,
    m: usize,
    rng: &mut R,
) -> QuantumCircuit {
    let mut c = QuantumCircuit::with_space(space.clone());
    let mut valid_idx = Vec::with_capacity(space.len());
    for _ in 0..m {
        valid_idx.clear();
        valid_idx.extend(
            c.valid_actions()
                .iter()
                .enumerate()
                .filter(|(_, v)| **v)
                .map(|(i, _)| i),
        );
        let a = valid_idx[rng.random_range(0..valid_idx.len())];
        c.append(a).expect("index from the action space");
    }
    c
}

/// One line of a target dataset (JSON lines).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TargetRecord {
    pub target_qasm: String,
    pub n_qubits: usize,
    pub t_count: usize,
    pub gate_count: usize,
    pub seed: u64,
}

impl TargetRecord {
    pub fn from_circuit(c: &QuantumCircuit, seed: u64) -> Self {
        Self {
            target_qasm: emit_qasm(c),
            n_qubits: c.n_qubits(),
            t_count: c.t_count(),
            gate_count: c.len(),
            seed,
        }
    }

    pub fn circuit(&self) -> Result<QuantumCircuit> {
        let c = crate::qasm::parse_qasm(&self.target_qasm)?;
        if c.n_qubits() != self.n_qubits {
            return Err(Error::Config(format!(
                "record declares {} qubit(s) but its circuit has {}",
                self.n_qubits,
                c.n_qubits()
            )));
        }
        Ok(c)
    }
}
