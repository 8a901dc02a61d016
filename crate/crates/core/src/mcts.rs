//! Gumbel AlphaZero search: Gumbel-Top-k root sampling, sequential halving
//! over the simulation budget, σ-mixed Q values and deterministic interior
//! selection. The tree is rebuilt from scratch for every environment step.
//!
//! All Q values stored in the tree are undiscounted returns (`-1` per gate).
//! They are divided by `max_steps` before entering σ, which keeps them in
//! `[-1, 0]` on the same footing as the critic's normalized output.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvState};
use crate::error::{Error, Result};
use crate::net::{softmax, Evaluator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_sim: usize,
    pub k: usize,
    pub c_visit: f64,
    pub c_scale: f64,
    pub max_depth: usize,
    /// Multiplier on the root Gumbel noise; `0` gives the deterministic search.
    pub gumbel_scale: f64,
    pub record_trace: bool,
}

impl SearchConfig {
    pub fn new(n_sim: usize, n_actions: usize) -> Self {
        Self {
            n_sim,
            k: n_actions.min(16),
            c_visit: 50.0,
            c_scale: 1.0,
            max_depth: usize::MAX,
            gumbel_scale: 1.0,
            record_trace: false,
        }
    }

    pub fn training(n_actions: usize) -> Self {
        Self::new(32, n_actions)
    }

    pub fn evaluation(n_actions: usize) -> Self {
        Self::new(64, n_actions)
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        if self.k == 0 || self.k > n_actions {
            return Err(Error::Config(format!(
                "k must lie in [1, {n_actions}], got {}",
                self.k
            )));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// `(c_visit + max N)·c_scale·q`, elementwise.
pub fn sigma_transform(q: &[f64], max_visits: u32, cfg: &SearchConfig) -> Vec<f64> {
    let scale = (cfg.c_visit + max_visits as f64) * cfg.c_scale;
    q.iter().map(|v| scale * v).collect()
}

fn rank_desc(scores: &[(usize, f64)]) -> Vec<usize> {
    let mut order = scores.to_vec();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    order.into_iter().map(|(i, _)| i).collect()
}

/// Indices of the `k` largest `g + logits`, skipping actions whose logit is
/// `-∞` (masked). Ties go to the lower index. Returns fewer than `k` when
/// fewer actions are unmasked.
pub fn gumbel_top_k(logits: &[f64], g: &[f64], k: usize) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = logits
        .iter()
        .zip(g)
        .enumerate()
        .filter(|(_, (l, _))| l.is_finite())
        .map(|(i, (l, gi))| (i, l + gi))
        .collect();
    let mut top = rank_desc(&scored);
    top.truncate(k);
    top
}

fn argmax_by_score(candidates: &[usize], score: impl Fn(usize) -> f64) -> usize {
    let scored: Vec<(usize, f64)> = candidates.iter().map(|&a| (a, score(a))).collect();
    rank_desc(&scored)[0]
}

/// Root decision rule: `argmax g + logits + σ(q)` over `candidates`.
pub fn select_root_action(
    candidates: &[usize],
    g: &[f64],
    logits: &[f64],
    q_normalized: &[f64],
    max_visits: u32,
    cfg: &SearchConfig,
) -> usize {
    let sigma = sigma_transform(q_normalized, max_visits, cfg);
    argmax_by_score(candidates, |a| g[a] + logits[a] + sigma[a])
}

#[derive(Clone, Debug)]
struct Node {
    state: EnvState,
    /// Prior logits with masked actions at `-∞`; empty for terminal nodes.
    logits: Vec<f64>,
    /// Critic estimate of the return from this node.
    value: f64,
    /// Reward on the edge into this node.
    reward: f64,
    visits: u32,
    value_sum: f64,
    min_return: f64,
    max_return: f64,
    children: Vec<Option<usize>>,
    terminal: bool,
}

impl Node {
    fn mean_value(&self) -> f64 {
        self.value_sum / self.visits as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub root_action: usize,
    pub path: Vec<usize>,
    pub leaf_value: f64,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub simulations: Vec<TraceEntry>,
    pub chosen_action: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub chosen_action: usize,
    pub improved_policy: Vec<f64>,
    pub root_value: f64,
    pub visit_counts: Vec<u32>,
    /// Root candidates from Gumbel-Top-k, best first.
    pub considered: Vec<usize>,
    /// Surviving candidate counts per halving phase, ending with the final pick.
    pub phase_survivors: Vec<usize>,
    /// Candidates left after the last halving; the final pick is among these.
    pub remaining: Vec<usize>,
    pub leaf_evaluations: usize,
    pub trace: Option<SearchTrace>,
}

/// Node store for one search.
pub struct SearchTree<'a, E: Evaluator> {
    env: &'a Env,
    net: &'a E,
    cfg: &'a SearchConfig,
    nodes: Vec<Node>,
    max_steps: f64,
    pub gumbel: Vec<f64>,
    leaf_evaluations: usize,
    trace: Vec<TraceEntry>,
}

impl<'a, E: Evaluator> SearchTree<'a, E> {
    fn new(env: &'a Env, net: &'a E, cfg: &'a SearchConfig, root: &EnvState) -> Result<Self> {
        if root.done {
            return Err(Error::TerminalRoot);
        }
        if net.n_actions() != env.n_actions() {
            return Err(Error::Config(format!(
                "network has {} actions, environment {}",
                net.n_actions(),
                env.n_actions()
            )));
        }
        cfg.validate(env.n_actions())?;
        let mut tree = Self {
            env,
            net,
            cfg,
            nodes: Vec::new(),
            max_steps: env.config().max_steps as f64,
            gumbel: vec![0.0; env.n_actions()],
            leaf_evaluations: 0,
            trace: Vec::new(),
        };
        let root_node = tree.make_node(root.clone(), 0.0);
        let v = root_node.value;
        tree.nodes.push(Node {
            visits: 1,
            value_sum: v,
            min_return: v,
            max_return: v,
            ..root_node
        });
        Ok(tree)
    }

    fn make_node(&self, state: EnvState, reward: f64) -> Node {
        let na = self.env.n_actions();
        let (logits, value) = if state.done {
            (Vec::new(), 0.0)
        } else {
            let ev = self.net.evaluate(&self.env.observe(&state));
            let logits = ev
                .logits
                .iter()
                .zip(&state.mask.valid)
                .map(|(&l, &ok)| if ok { l } else { f64::NEG_INFINITY })
                .collect();
            (logits, ev.value.clamp(-1.0, 1.0) * self.max_steps)
        };
        Node {
            terminal: state.done,
            state,
            logits,
            value,
            reward,
            visits: 0,
            value_sum: 0.0,
            min_return: f64::INFINITY,
            max_return: f64::NEG_INFINITY,
            children: vec![None; na],
        }
    }

    /// Completed Q in return units: visited children use their empirical
    /// value, the rest fall back to the node's own value estimate.
    fn completed_q(&self, id: usize) -> Vec<f64> {
        let node = &self.nodes[id];
        node.children
            .iter()
            .map(|c| match c {
                Some(c) if self.nodes[*c].visits > 0 => {
                    let ch = &self.nodes[*c];
                    ch.reward + ch.mean_value()
                }
                _ => node.value,
            })
            .collect()
    }

    fn child_visits(&self, id: usize) -> Vec<u32> {
        self.nodes[id]
            .children
            .iter()
            .map(|c| c.map(|c| self.nodes[c].visits).unwrap_or(0))
            .collect()
    }

    fn normalized(&self, q: &[f64]) -> Vec<f64> {
        q.iter().map(|v| v / self.max_steps).collect()
    }

    /// `softmax(logits + σ(completed Q))` at a node, zero on masked actions.
    fn improved_policy_at(&self, id: usize) -> Vec<f64> {
        let node = &self.nodes[id];
        let visits = self.child_visits(id);
        let max_n = visits.iter().copied().max().unwrap_or(0);
        let sigma = sigma_transform(&self.normalized(&self.completed_q(id)), max_n, self.cfg);
        let mixed: Vec<f64> = node.logits.iter().zip(&sigma).map(|(l, s)| l + s).collect();
        softmax(&mixed)
    }

    fn select_interior(&self, id: usize) -> usize {
        let pi = self.improved_policy_at(id);
        let visits = self.child_visits(id);
        let total: u32 = visits.iter().sum();
        let valid: Vec<usize> = self.nodes[id].state.mask.valid_indices().collect();
        argmax_by_score(&valid, |a| pi[a] - visits[a] as f64 / (1.0 + total as f64))
    }

    fn simulate(&mut self, root_action: usize) -> Result<()> {
        let mut path = vec![0usize];
        let mut actions = vec![root_action];
        let mut node = 0usize;
        let mut action = root_action;
        let (leaf_value, terminal) = loop {
            match self.nodes[node].children[action] {
                None => {
                    let step = self.env.step(&self.nodes[node].state, action)?;
                    let child = self.make_node(step.state, step.reward);
                    let v = child.value;
                    let term = child.terminal;
                    self.nodes.push(child);
                    let id = self.nodes.len() - 1;
                    self.nodes[node].children[action] = Some(id);
                    path.push(id);
                    break (v, term);
                }
                Some(c) => {
                    path.push(c);
                    let ch = &self.nodes[c];
                    if ch.terminal || path.len() > self.cfg.max_depth {
                        break (ch.value, ch.terminal);
                    }
                    node = c;
                    action = self.select_interior(c);
                    actions.push(action);
                }
            }
        };
        self.leaf_evaluations += 1;
        if self.cfg.record_trace {
            self.trace.push(TraceEntry {
                root_action,
                path: actions,
                leaf_value,
                terminal,
            });
        }
        let mut ret = leaf_value;
        for &id in path.iter().rev() {
            let n = &mut self.nodes[id];
            n.visits += 1;
            n.value_sum += ret;
            n.min_return = n.min_return.min(ret);
            n.max_return = n.max_return.max(ret);
            ret += n.reward;
        }
        Ok(())
    }

    fn root_scores(&self, candidates: &[usize]) -> Vec<(usize, f64)> {
        let visits = self.child_visits(0);
        let max_n = visits.iter().copied().max().unwrap_or(0);
        let sigma = sigma_transform(&self.normalized(&self.completed_q(0)), max_n, self.cfg);
        let root = &self.nodes[0];
        candidates
            .iter()
            .map(|&a| (a, self.gumbel[a] + root.logits[a] + sigma[a]))
            .collect()
    }

    fn run(&mut self) -> Result<SearchResult> {
        let cfg = self.cfg;
        let root_logits = self.nodes[0].logits.clone();
        let mut considered = gumbel_top_k(&root_logits, &self.gumbel, cfg.k);
        if considered.is_empty() {
            return Err(Error::InvalidAction {
                action: 0,
                reason: "root has no valid action".into(),
            });
        }
        // budget smaller than the candidate set: keep the best `n_sim` only
        if cfg.n_sim < considered.len() {
            considered.truncate(cfg.n_sim.max(1));
        }
        let m = considered.len();
        let phases = (usize::BITS - (m - 1).leading_zeros()).max(1) as usize;
        let mut survivors = considered.clone();
        let mut phase_survivors = vec![m];
        let mut remaining = cfg.n_sim;
        while remaining > 0 {
            let per = (cfg.n_sim / (phases * survivors.len())).max(1);
            'phase: for _ in 0..per {
                for &a in &survivors {
                    if remaining == 0 {
                        break 'phase;
                    }
                    self.simulate(a)?;
                    remaining -= 1;
                }
            }
            if survivors.len() > 2 && remaining > 0 {
                let keep = survivors.len().div_ceil(2);
                survivors = rank_desc(&self.root_scores(&survivors));
                survivors.truncate(keep);
                phase_survivors.push(keep);
            }
        }
        let chosen = rank_desc(&self.root_scores(&survivors))[0];
        phase_survivors.push(1);

        let mut improved = self.improved_policy_at(0);
        for (p, ok) in improved.iter_mut().zip(&self.nodes[0].state.mask.valid) {
            if !ok {
                *p = 0.0;
            }
        }
        Ok(SearchResult {
            chosen_action: chosen,
            improved_policy: improved,
            root_value: self.nodes[0].mean_value(),
            visit_counts: self.child_visits(0),
            considered,
            phase_survivors,
            remaining: survivors,
            leaf_evaluations: self.leaf_evaluations,
            trace: cfg.record_trace.then(|| SearchTrace {
                simulations: std::mem::take(&mut self.trace),
                chosen_action: chosen,
            }),
        })
    }

    /// Structural checks: visit conservation, value bounds and root accounting.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (id, n) in self.nodes.iter().enumerate() {
            let child_sum: u32 = self.child_visits(id).iter().sum();
            if !n.terminal && n.visits != 1 + child_sum {
                return Err(format!("node {id}: N = {} but 1 + ΣN(child) = {}", n.visits, 1 + child_sum));
            }
            if n.terminal && child_sum != 0 {
                return Err(format!("terminal node {id} has children"));
            }
            let mean = n.mean_value();
            if mean < n.min_return - 1e-9 || mean > n.max_return + 1e-9 {
                return Err(format!(
                    "node {id}: mean {mean} outside [{}, {}]",
                    n.min_return, n.max_return
                ));
            }
        }
        let root_children: u32 = self.child_visits(0).iter().sum();
        if root_children as usize != self.leaf_evaluations {
            return Err(format!(
                "root children visited {root_children} times for {} simulations",
                self.leaf_evaluations
            ));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Runs one search from `root` with fresh Gumbel noise drawn from `rng`.
pub fn run_search<E: Evaluator, R: Rng + ?Sized>(
    env: &Env,
    root: &EnvState,
    net: &E,
    cfg: &SearchConfig,
    rng: &mut R,
) -> Result<SearchResult> {
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let g: Vec<f64> = (0..env.n_actions())
        .map(|_| cfg.gumbel_scale * gumbel.sample(rng))
        .collect();
    run_search_with_gumbel(env, root, net, cfg, g, |_| Ok(()))
}

/// Runs one search with explicit root Gumbel values; `inspect` sees the final tree.
pub fn run_search_with_gumbel<E: Evaluator>(
    env: &Env,
    root: &EnvState,
    net: &E,
    cfg: &SearchConfig,
    gumbel: Vec<f64>,
    inspect: impl FnOnce(&SearchTree<'_, E>) -> std::result::Result<(), String>,
) -> Result<SearchResult> {
    let mut tree = SearchTree::new(env, net, cfg, root)?;
    if gumbel.len() != env.n_actions() {
        return Err(Error::Shape("gumbel vector length differs from the action count".into()));
    }
    tree.gumbel = gumbel;
    let result = tree.run()?;
    inspect(&tree).map_err(Error::Config)?;
    Ok(result)
}
