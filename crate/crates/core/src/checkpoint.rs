//! Versioned JSON checkpoints holding both networks, optimizer moments,
//! counters and the environment configuration they were trained for.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::gates::action_count;
use crate::net::ActorCritic;
use crate::optim::{AdamConfig, AdamState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub env: EnvConfig,
    pub net: ActorCritic,
    pub adam: AdamConfig,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub env_steps: u64,
    pub updates: u64,
    pub seed: u64,
}

impl Checkpoint {
    /// Fresh optimizer state around an existing network.
    pub fn new(env: EnvConfig, net: ActorCritic, adam: AdamConfig, seed: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            actor_opt: AdamState::new(net.actor.data.len()),
            critic_opt: AdamState::new(net.critic.data.len()),
            env,
            net,
            adam,
            env_steps: 0,
            updates: 0,
            seed,
        }
    }

    /// Checks internal consistency: version, layer sizes and moment lengths.
    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.env.validate()?;
        let n = self.env.n_qubits;
        let input = 2 << (2 * n);
        let na = action_count(n);
        let (actor, critic) = (&self.net.actor, &self.net.critic);
        if actor.shape.input != input || critic.shape.input != input {
            return Err(Error::Shape(format!(
                "network input {} does not match {n} qubit(s) ({input})",
                actor.shape.input
            )));
        }
        if actor.shape.output != na || critic.shape.output != 1 {
            return Err(Error::Shape(format!(
                "network outputs ({}, {}) do not match {na} actions",
                actor.shape.output, critic.shape.output
            )));
        }
        for (p, name) in [(actor, "actor"), (critic, "critic")] {
            if p.data.len() != p.shape.n_params() {
                return Err(Error::Shape(format!("{name} parameter count does not match its layers")));
            }
            if !p.is_finite() {
                return Err(Error::Divergence(format!("{name} parameters are not finite")));
            }
        }
        if self.actor_opt.m.len() != actor.data.len()
            || self.actor_opt.v.len() != actor.data.len()
            || self.critic_opt.m.len() != critic.data.len()
            || self.critic_opt.v.len() != critic.data.len()
        {
            return Err(Error::Shape("optimizer moments do not match the parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads and rejects checkpoints built for another qubit count.
    pub fn load_for(path: &Path, n_qubits: usize) -> Result<Self> {
        let c = Self::load(path)?;
        if c.env.n_qubits != n_qubits {
            return Err(Error::Config(format!(
                "checkpoint was trained for {} qubit(s), requested {n_qubits}",
                c.env.n_qubits
            )));
        }
        Ok(c)
    }
}
