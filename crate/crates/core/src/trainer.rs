//! Self-play training: workers advance with Gumbel search, finished episodes
//! are backfilled with undiscounted Monte Carlo returns into a replay buffer,
//! and gradient updates keep a fixed update-to-data ratio.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::env::{Env, EnvConfig, EnvState};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::mcts::{run_search, SearchConfig};
use crate::net::{ActorCritic, LossReport, TrainBatch};
use crate::optim::{adam_step, AdamConfig};
use crate::synth::{synthesize, EvalConfig, ScoreKind};
use crate::{derive_seed, streams};

pub const REPLAY_CAPACITY: usize = 100_000;

/// Ring buffer of `(observation, improved policy, value target)` stored as `f32`.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_len: usize,
    n_actions: usize,
    obs: Vec<f32>,
    policy: Vec<f32>,
    value: Vec<f32>,
    cursor: usize,
    size: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_len: usize, n_actions: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_len,
            n_actions,
            obs: Vec::new(),
            policy: Vec::new(),
            value: Vec::new(),
            cursor: 0,
            size: 0,
            pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Transitions ever pushed, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    /// Appends one transition, evicting the oldest when full. The value target is clamped to `[-1, 1]`.
    pub fn push(&mut self, obs: &[f64], policy: &[f64], value: f64) {
        assert_eq!(obs.len(), self.obs_len);
        assert_eq!(policy.len(), self.n_actions);
        let v = value.clamp(-1.0, 1.0) as f32;
        if self.size < self.capacity {
            self.obs.extend(obs.iter().map(|&x| x as f32));
            self.policy.extend(policy.iter().map(|&x| x as f32));
            self.value.push(v);
            self.size += 1;
        } else {
            let (o, p) = (self.cursor * self.obs_len, self.cursor * self.n_actions);
            for (dst, &x) in self.obs[o..o + self.obs_len].iter_mut().zip(obs) {
                *dst = x as f32;
            }
            for (dst, &x) in self.policy[p..p + self.n_actions].iter_mut().zip(policy) {
                *dst = x as f32;
            }
            self.value[self.cursor] = v;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Stored transition at slot `i`.
    pub fn get(&self, i: usize) -> (Vec<f64>, Vec<f64>, f64) {
        assert!(i < self.size);
        let obs = self.obs[i * self.obs_len..(i + 1) * self.obs_len].iter().map(|&x| x as f64).collect();
        let pol = self.policy[i * self.n_actions..(i + 1) * self.n_actions]
            .iter()
            .map(|&x| x as f64)
            .collect();
        (obs, pol, self.value[i] as f64)
    }

    /// Uniform draws (with replacement) over occupied slots.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        assert!(self.size > 0, "cannot sample an empty buffer");
        (0..count).map(|_| rng.random_range(0..self.size)).collect()
    }

    /// Gathers a training batch; policy rows are renormalized in `f64`.
    pub fn batch(&self, indices: &[usize]) -> TrainBatch {
        let b = indices.len();
        let mut observations = Array2::zeros((b, self.obs_len));
        let mut policy_targets = Array2::zeros((b, self.n_actions));
        let mut value_targets = Array1::zeros(b);
        for (r, &i) in indices.iter().enumerate() {
            let o = &self.obs[i * self.obs_len..(i + 1) * self.obs_len];
            for (dst, &x) in observations.row_mut(r).iter_mut().zip(o) {
                *dst = x as f64;
            }
            let p = &self.policy[i * self.n_actions..(i + 1) * self.n_actions];
            let sum: f64 = p.iter().map(|&x| x as f64).sum();
            for (dst, &x) in policy_targets.row_mut(r).iter_mut().zip(p) {
                *dst = x as f64 / sum;
            }
            value_targets[r] = self.value[i] as f64;
        }
        TrainBatch {
            observations,
            policy_targets,
            value_targets,
        }
    }
}

/// Normalized undiscounted returns `G_t / max_steps` for a reward sequence,
/// clamped to `[-1, 1]`.
pub fn value_targets(rewards: &[f64], max_steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g += rewards[t];
        out[t] = (g / max_steps as f64).clamp(-1.0, 1.0);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub n_workers: usize,
    pub batch_size: usize,
    pub update_to_data: f64,
    /// Environment steps summed over workers.
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    pub eval_interval: u64,
    pub eval_targets: usize,
    pub eval_runs: usize,
    pub eval_sims: usize,
    pub train_sims: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub value_weight: f64,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            n_workers: 64,
            batch_size: 256,
            update_to_data: 4.0,
            total_steps: 200_000,
            checkpoint_interval: 50_000,
            eval_interval: 50_000,
            eval_targets: 50,
            eval_runs: 16,
            eval_sims: 64,
            train_sims: 32,
            width: 256,
            hidden_layers: 5,
            lr: 3e-4,
            value_weight: 1.0,
            buffer_capacity: REPLAY_CAPACITY,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_workers", self.n_workers as u64),
            ("batch_size", self.batch_size as u64),
            ("total_steps", self.total_steps),
            ("checkpoint_interval", self.checkpoint_interval),
            ("eval_interval", self.eval_interval),
            ("eval_runs", self.eval_runs as u64),
            ("eval_sims", self.eval_sims as u64),
            ("train_sims", self.train_sims as u64),
            ("width", self.width as u64),
            ("hidden_layers", self.hidden_layers as u64),
            ("buffer_capacity", self.buffer_capacity as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.update_to_data > 0.0 && self.lr > 0.0 && self.value_weight >= 0.0) {
            return Err(Error::Config(
                "update_to_data and lr must be positive, value_weight non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Step {
    obs: Vec<f64>,
    policy: Vec<f64>,
    reward: f64,
}

#[derive(Clone, Debug)]
struct Worker {
    state: EnvState,
    rng: ChaCha8Rng,
    steps: Vec<Step>,
}

/// A finished self-play episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub rewards: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub solved: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CollectStats {
    pub env_steps: u64,
    pub episodes: Vec<Episode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_gates: Option<f64>,
    pub mean_t_count: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub updates: u64,
    pub loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub eval_success_rate: Option<f64>,
    pub mean_solution_gates: Option<f64>,
    pub mean_solution_t_count: Option<f64>,
    pub train_episodes: u64,
    pub train_solved_fraction: Option<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoints: Vec<PathBuf>,
    pub log: Vec<LogRow>,
}

pub struct Trainer {
    cfg: TrainerConfig,
    env: Env,
    state: Checkpoint,
    buffer: ReplayBuffer,
    workers: Vec<Worker>,
    replay_rng: ChaCha8Rng,
    search: SearchConfig,
    eval_targets: Vec<ComplexMatrix>,
    loss_acc: Option<(LossReport, u64)>,
    episodes_acc: (u64, u64),
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, env_cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let env = Env::new(env_cfg.clone())?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::NET_INIT, 0));
        let net = ActorCritic::new(
            env.observation_len(),
            env.n_actions(),
            cfg.width,
            cfg.hidden_layers,
            &mut init_rng,
        );
        let adam = AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        };
        Self::from_checkpoint(cfg, Checkpoint::new(env_cfg, net, adam, 0))
    }

    /// Continues from `state`; the buffer and workers start fresh.
    pub fn from_checkpoint(cfg: TrainerConfig, mut state: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        state.validate()?;
        state.seed = cfg.seed;
        let env = Env::new(state.env.clone())?;
        let workers = (0..cfg.n_workers)
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::TRAIN_WORKER, w as u64));
                let key = rng.random();
                Worker {
                    state: env.reset(&mut rng, key),
                    rng,
                    steps: Vec::new(),
                }
            })
            .collect();
        let eval_targets = (0..cfg.eval_targets)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::EVAL_TARGETS, i as u64));
                env.sample_target(&mut rng).unitary().clone()
            })
            .collect();
        let mut search = SearchConfig::training(env.n_actions());
        search.n_sim = cfg.train_sims;
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer_capacity, env.observation_len(), env.n_actions()),
            replay_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, streams::REPLAY, 0)),
            search,
            eval_targets,
            workers,
            env,
            state,
            cfg,
            loss_acc: None,
            episodes_acc: (0, 0),
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn net(&self) -> &ActorCritic {
        &self.state.net
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.state.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.state.updates
    }

    /// Held-out evaluation targets, drawn from a seed stream disjoint from the workers'.
    pub fn eval_targets(&self) -> &[ComplexMatrix] {
        &self.eval_targets
    }

    /// Advances every worker by one searched step. Finished episodes are
    /// pushed to the buffer in worker order and their workers reset.
    pub fn collect(&mut self) -> Result<CollectStats> {
        let env = &self.env;
        let net = &self.state.net;
        let search = &self.search;
        let max_steps = env.config().max_steps;
        let finished: Vec<Option<(Vec<Step>, bool)>> = self
            .workers
            .par_iter_mut()
            .map(|w| -> Result<Option<(Vec<Step>, bool)>> {
                let r = run_search(env, &w.state, net, search, &mut w.rng)?;
                let out = env.step(&w.state, r.chosen_action)?;
                w.steps.push(Step {
                    obs: env.observe(&w.state),
                    policy: r.improved_policy,
                    reward: out.reward,
                });
                if out.done {
                    let solved = out.state.solved;
                    let key = w.rng.random();
                    w.state = env.reset(&mut w.rng, key);
                    // a target equal to the identity up to phase starts finished
                    while w.state.done {
                        let key = w.rng.random();
                        w.state = env.reset(&mut w.rng, key);
                    }
                    Ok(Some((std::mem::take(&mut w.steps), solved)))
                } else {
                    w.state = out.state;
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;

        let mut stats = CollectStats {
            env_steps: self.workers.len() as u64,
            episodes: Vec::new(),
        };
        for (steps, solved) in finished.into_iter().flatten() {
            let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
            let targets = value_targets(&rewards, max_steps);
            for (s, &v) in steps.iter().zip(&targets) {
                self.buffer.push(&s.obs, &s.policy, v);
            }
            self.episodes_acc.0 += 1;
            self.episodes_acc.1 += solved as u64;
            stats.episodes.push(Episode {
                rewards,
                value_targets: targets,
                solved,
            });
        }
        self.state.env_steps += stats.env_steps;
        Ok(stats)
    }

    /// Gradient steps still owed: `floor(ratio · pushed / batch) − done`.
    pub fn updates_owed(&self) -> u64 {
        let target = (self.cfg.update_to_data * self.buffer.total_pushed() as f64 / self.cfg.batch_size as f64)
            .floor() as u64;
        target.saturating_sub(self.state.updates)
    }

    /// One Adam step on both networks from a uniformly sampled batch.
    pub fn update(&mut self) -> Result<LossReport> {
        if self.buffer.is_empty() {
            return Err(Error::Config("cannot update from an empty replay buffer".into()));
        }
        let idx = self.buffer.sample_indices(&mut self.replay_rng, self.cfg.batch_size);
        let batch = self.buffer.batch(&idx);
        let (loss, grads) = self
            .state
            .net
            .loss_and_grads(&batch, self.cfg.value_weight)
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!(
                    "{msg} at update {} after {} environment steps",
                    self.state.updates, self.state.env_steps
                )),
                other => other,
            })?;
        let adam = self.state.adam;
        adam_step(&mut self.state.net.actor.data, &grads.actor, &mut self.state.actor_opt, &adam)?;
        adam_step(&mut self.state.net.critic.data, &grads.critic, &mut self.state.critic_opt, &adam)?;
        if !self.state.net.actor.is_finite() || !self.state.net.critic.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite parameters after update {}",
                self.state.updates
            )));
        }
        self.state.updates += 1;
        let acc = self.loss_acc.get_or_insert((
            LossReport {
                total: 0.0,
                policy: 0.0,
                value: 0.0,
            },
            0,
        ));
        acc.0.total += loss.total;
        acc.0.policy += loss.policy;
        acc.0.value += loss.value;
        acc.1 += 1;
        Ok(loss)
    }

    /// Collects one round and performs every owed update.
    pub fn train_step(&mut self) -> Result<CollectStats> {
        let stats = self.collect()?;
        for _ in 0..self.updates_owed() {
            self.update()?;
        }
        Ok(stats)
    }

    /// Synthesizes every held-out target with the current network.
    pub fn evaluate(&self) -> Result<EvalSummary> {
        let mut eval = EvalConfig::new(self.cfg.eval_runs, self.env.n_actions());
        eval.search.n_sim = self.cfg.eval_sims;
        eval.score_kind = ScoreKind::MinTotalGates;
        evaluate_targets(&self.eval_targets, self.env.config(), &self.state.net, &eval, self.cfg.seed)
    }

    fn log_row(&mut self, eval: Option<EvalSummary>) -> LogRow {
        let loss = self.loss_acc.take();
        let (episodes, solved) = std::mem::take(&mut self.episodes_acc);
        let mean = |f: fn(&LossReport) -> f64| loss.as_ref().map(|(l, n)| f(l) / *n as f64);
        LogRow {
            step: self.state.env_steps,
            updates: self.state.updates,
            loss: mean(|l| l.total),
            policy_loss: mean(|l| l.policy),
            value_loss: mean(|l| l.value),
            eval_success_rate: eval.as_ref().map(|e| e.success_rate),
            mean_solution_gates: eval.as_ref().and_then(|e| e.mean_gates),
            mean_solution_t_count: eval.as_ref().and_then(|e| e.mean_t_count),
            train_episodes: episodes,
            train_solved_fraction: (episodes > 0).then(|| solved as f64 / episodes as f64),
        }
    }

    /// Runs until `total_steps` environment steps, evaluating every
    /// `eval_interval` and checkpointing every `checkpoint_interval` steps.
    /// With an output directory, checkpoints and `train_log.csv` are written there.
    pub fn run(mut self, out_dir: Option<&Path>, mut on_log: impl FnMut(&LogRow)) -> Result<TrainOutcome> {
        let mut log = Vec::new();
        let mut checkpoints = Vec::new();
        let mut csv = match out_dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Some(csv::Writer::from_path(d.join("train_log.csv")).map_err(csv_err)?)
            }
            None => None,
        };
        while self.state.env_steps < self.cfg.total_steps {
            let before = self.state.env_steps;
            self.train_step()?;
            let after = self.state.env_steps;
            let crossed = |interval: u64| after / interval > before / interval || after >= self.cfg.total_steps;
            let do_eval = crossed(self.cfg.eval_interval);
            let do_ckpt = crossed(self.cfg.checkpoint_interval);
            if do_eval {
                let eval = if self.cfg.eval_targets > 0 {
                    Some(self.evaluate()?)
                } else {
                    None
                };
                let row = self.log_row(eval);
                on_log(&row);
                if let Some(w) = csv.as_mut() {
                    w.serialize(&row).map_err(csv_err)?;
                    w.flush()?;
                }
                log.push(row);
            }
            if do_ckpt {
                if let Some(d) = out_dir {
                    let path = d.join(format!("checkpoint_{:010}.json", after));
                    self.state.save(&path)?;
                    checkpoints.push(path);
                }
            }
        }
        Ok(TrainOutcome {
            checkpoint: self.state,
            checkpoints,
            log,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Success rate and mean solution size over `targets` with seeded runs.
pub fn evaluate_targets(
    targets: &[ComplexMatrix],
    env_cfg: &EnvConfig,
    net: &ActorCritic,
    eval: &EvalConfig,
    seed: u64,
) -> Result<EvalSummary> {
    let mut solved = 0usize;
    let (mut gates, mut ts) = (0usize, 0usize);
    for (i, u) in targets.iter().enumerate() {
        let r = synthesize(u, env_cfg, net, eval, derive_seed(seed, streams::EVAL_RUNS, i as u64))?;
        if r.success {
            solved += 1;
            gates += r.total_gates.unwrap_or(0);
            ts += r.t_count.unwrap_or(0);
        }
    }
    let n = targets.len().max(1) as f64;
    Ok(EvalSummary {
        success_rate: solved as f64 / n,
        mean_gates: (solved > 0).then(|| gates as f64 / solved as f64),
        mean_t_count: (solved > 0).then(|| ts as f64 / solved as f64),
    })
}

/// Trains from scratch; see [`Trainer::run`].
pub fn train_loop(cfg: TrainerConfig, env_cfg: EnvConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    Trainer::new(cfg, env_cfg)?.run(out_dir, |_| {})
}
