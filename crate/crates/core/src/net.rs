//! Actor and critic MLPs with layer normalization, written against flat
//! parameter buffers so the optimizer and checkpoints see one vector.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Raw logits.
    Linear,
    /// Scalar squashed to (-1, 1).
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub width: usize,
    pub hidden_layers: usize,
    pub output: usize,
    pub head: Head,
}

#[derive(Clone, Copy, Debug)]
struct HiddenOffsets {
    fan_in: usize,
    weight: usize,
    bias: usize,
    gain: usize,
    offset: usize,
}

impl MlpShape {
    fn hidden_offsets(&self) -> Vec<HiddenOffsets> {
        let mut at = 0;
        (0..self.hidden_layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input } else { self.width };
                let o = HiddenOffsets {
                    fan_in,
                    weight: at,
                    bias: at + fan_in * self.width,
                    gain: at + fan_in * self.width + self.width,
                    offset: at + fan_in * self.width + 2 * self.width,
                };
                at = o.offset + self.width;
                o
            })
            .collect()
    }

    fn output_offsets(&self) -> (usize, usize, usize) {
        let fan_in = if self.hidden_layers == 0 { self.input } else { self.width };
        let start = self
            .hidden_offsets()
            .last()
            .map(|o| o.offset + self.width)
            .unwrap_or(0);
        (fan_in, start, start + fan_in * self.output)
    }

    pub fn n_params(&self) -> usize {
        let (fan_in, w, _) = self.output_offsets();
        w + fan_in * self.output + self.output
    }
}

/// Parameters of one MLP in a single flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub shape: MlpShape,
    pub data: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
    inv_std: Vec<Array1<f64>>,
    activated: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl MlpParams {
    pub fn zeros(shape: MlpShape) -> Self {
        let n = shape.n_params();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// He-normal hidden weights, unit gains and a small output layer.
    pub fn init<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let shape = p.shape.clone();
        for o in shape.hidden_offsets() {
            let dist = Normal::new(0.0, (2.0 / o.fan_in as f64).sqrt()).expect("finite std");
            for w in &mut p.data[o.weight..o.bias] {
                *w = dist.sample(rng);
            }
            for g in &mut p.data[o.gain..o.offset] {
                *g = 1.0;
            }
        }
        let (fan_in, w_at, b_at) = shape.output_offsets();
        let dist = Normal::new(0.0, 0.01 / (fan_in as f64).sqrt()).expect("finite std");
        for w in &mut p.data[w_at..b_at] {
            *w = dist.sample(rng);
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn view2(&self, at: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.data[at..at + rows * cols]).expect("layout")
    }

    fn view1(&self, at: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[at..at + len])
    }

    fn check_input(&self, obs: &ArrayView2<'_, f64>) -> Result<()> {
        if obs.ncols() != self.shape.input {
            return Err(Error::Shape(format!(
                "network expects inputs of length {}, got {}",
                self.shape.input,
                obs.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(obs)?.output)
    }

    pub fn forward_cached(&self, obs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(&obs)?;
        let w = self.shape.width;
        let mut cache = ForwardCache {
            inputs: Vec::new(),
            normalized: Vec::new(),
            inv_std: Vec::new(),
            activated: Vec::new(),
            output: Array2::zeros((0, 0)),
        };
        let mut x = obs.to_owned();
        for o in self.shape.hidden_offsets() {
            let mut z = x.dot(&self.view2(o.weight, o.fan_in, w));
            z += &self.view1(o.bias, w);
            let mut inv_std = Array1::zeros(z.nrows());
            for (mut row, inv) in z.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
                *inv = normalize_row(&mut row);
            }
            let mut a = &z * &self.view1(o.gain, w);
            a += &self.view1(o.offset, w);
            let h = a.mapv(|v| v.max(0.0));
            cache.inputs.push(std::mem::replace(&mut x, h));
            cache.normalized.push(z);
            cache.inv_std.push(inv_std);
            cache.activated.push(a);
        }
        let (fan_in, w_at, b_at) = self.shape.output_offsets();
        let mut out = x.dot(&self.view2(w_at, fan_in, self.shape.output));
        out += &self.view1(b_at, self.shape.output);
        if self.shape.head == Head::Tanh {
            out.mapv_inplace(f64::tanh);
        }
        cache.inputs.push(x);
        cache.output = out;
        Ok(cache)
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂output` (post-head).
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView2<'_, f64>, grads: &mut [f64]) {
        assert_eq!(grads.len(), self.data.len());
        let w = self.shape.width;
        let mut dz = d_out.to_owned();
        if self.shape.head == Head::Tanh {
            dz.zip_mut_with(&cache.output, |d, y| *d *= 1.0 - y * y);
        }
        let (fan_in, w_at, b_at) = self.shape.output_offsets();
        let h = cache.inputs.last().expect("cache holds the final input");
        grad_view2(grads, w_at, fan_in, self.shape.output).scaled_add(1.0, &h.t().dot(&dz));
        grad_view1(grads, b_at, self.shape.output).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        let mut dh = dz.dot(&self.view2(w_at, fan_in, self.shape.output).t());

        for (l, o) in self.shape.hidden_offsets().iter().enumerate().rev() {
            let y_hat = &cache.normalized[l];
            let mut da = dh;
            da.zip_mut_with(&cache.activated[l], |d, a| {
                if *a <= 0.0 {
                    *d = 0.0
                }
            });
            grad_view1(grads, o.gain, w).scaled_add(1.0, &(&da * y_hat).sum_axis(Axis(0)));
            grad_view1(grads, o.offset, w).scaled_add(1.0, &da.sum_axis(Axis(0)));
            let mut dy = da * self.view1(o.gain, w);
            for ((mut row, y_row), inv) in dy
                .axis_iter_mut(Axis(0))
                .zip(y_hat.axis_iter(Axis(0)))
                .zip(cache.inv_std[l].iter())
            {
                let mean_d = row.mean().unwrap_or(0.0);
                let mean_dy = row.dot(&y_row) / w as f64;
                row.zip_mut_with(&y_row, |d, y| *d = (*d - mean_d - y * mean_dy) * inv);
            }
            let x = &cache.inputs[l];
            grad_view2(grads, o.weight, o.fan_in, w).scaled_add(1.0, &x.t().dot(&dy));
            grad_view1(grads, o.bias, w).scaled_add(1.0, &dy.sum_axis(Axis(0)));
            dh = dy.dot(&self.view2(o.weight, o.fan_in, w).t());
        }
    }
}

/// Normalizes a row in place to zero mean and unit variance; returns `1/σ`.
fn normalize_row(row: &mut ArrayViewMut1<'_, f64>) -> f64 {
    let n = row.len() as f64;
    let mean = row.sum() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    row.mapv_inplace(|v| (v - mean) * inv);
    inv
}

fn grad_view2(g: &mut [f64], at: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut g[at..at + rows * cols]).expect("layout")
}

fn grad_view1(g: &mut [f64], at: usize, len: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut g[at..at + len])
}

/// Leaf evaluation: policy logits and a critic value in `(-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Anything that can score an observation for the search.
pub trait Evaluator: Sync {
    fn n_actions(&self) -> usize;
    fn evaluate(&self, obs: &[f64]) -> Evaluation;
    /// Expected observation length, when the evaluator has a fixed one.
    fn observation_len(&self) -> Option<usize> {
        None
    }
}

/// Zero logits and zero value everywhere.
#[derive(Clone, Debug)]
pub struct UniformEvaluator {
    pub n_actions: usize,
}

impl Evaluator for UniformEvaluator {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn evaluate(&self, _obs: &[f64]) -> Evaluation {
        Evaluation {
            logits: vec![0.0; self.n_actions],
            value: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: MlpParams,
    pub critic: MlpParams,
}

impl ActorCritic {
    pub fn shapes(input: usize, n_actions: usize, width: usize, hidden_layers: usize) -> (MlpShape, MlpShape) {
        let actor = MlpShape {
            input,
            width,
            hidden_layers,
            output: n_actions,
            head: Head::Linear,
        };
        let critic = MlpShape {
            output: 1,
            head: Head::Tanh,
            ..actor.clone()
        };
        (actor, critic)
    }

    pub fn new<R: Rng + ?Sized>(
        input: usize,
        n_actions: usize,
        width: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Self {
        let (a, c) = Self::shapes(input, n_actions, width, hidden_layers);
        Self {
            actor: MlpParams::init(a, rng),
            critic: MlpParams::init(c, rng),
        }
    }

    pub fn zeros(input: usize, n_actions: usize, width: usize, hidden_layers: usize) -> Self {
        let (a, c) = Self::shapes(input, n_actions, width, hidden_layers);
        Self {
            actor: MlpParams::zeros(a),
            critic: MlpParams::zeros(c),
        }
    }

    pub fn input_len(&self) -> usize {
        self.actor.shape.input
    }

    pub fn forward_actor(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.actor.forward(obs)
    }

    pub fn forward_critic(&self, obs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.critic.forward(obs)?.column(0).to_owned())
    }

    pub fn loss_and_grads(&self, batch: &TrainBatch, value_weight: f64) -> Result<(LossReport, Gradients)> {
        let b = batch.observations.nrows();
        if b == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if batch.policy_targets.dim() != (b, self.actor.shape.output) || batch.value_targets.len() != b {
            return Err(Error::Shape("batch targets do not match the network".into()));
        }
        let obs = batch.observations.view();
        let actor_cache = self.actor.forward_cached(obs)?;
        let critic_cache = self.critic.forward_cached(obs)?;

        let mut d_logits = Array2::zeros(actor_cache.output.raw_dim());
        let mut policy_loss = 0.0;
        for ((logits, target), mut d) in actor_cache
            .output
            .axis_iter(Axis(0))
            .zip(batch.policy_targets.axis_iter(Axis(0)))
            .zip(d_logits.axis_iter_mut(Axis(0)))
        {
            let probs = softmax(logits.as_slice().expect("contiguous"));
            let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for ((dd, p), (&t, &l)) in d.iter_mut().zip(&probs).zip(target.iter().zip(logits.iter())) {
                policy_loss -= t * (l - lse);
                *dd = (p - t) / b as f64;
            }
        }
        policy_loss /= b as f64;

        let values = critic_cache.output.column(0);
        let mut d_value = Array2::zeros((b, 1));
        let mut value_loss = 0.0;
        for (i, (&v, &t)) in values.iter().zip(batch.value_targets.iter()).enumerate() {
            value_loss += (v - t).powi(2);
            d_value[[i, 0]] = value_weight * 2.0 * (v - t) / b as f64;
        }
        value_loss /= b as f64;
        let total = policy_loss + value_weight * value_loss;
        if !total.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss (policy {policy_loss}, value {value_loss})"
            )));
        }

        let mut grads = Gradients {
            actor: vec![0.0; self.actor.data.len()],
            critic: vec![0.0; self.critic.data.len()],
        };
        self.actor.backward(&actor_cache, d_logits.view(), &mut grads.actor);
        self.critic.backward(&critic_cache, d_value.view(), &mut grads.critic);
        Ok((
            LossReport {
                total,
                policy: policy_loss,
                value: value_loss,
            },
            grads,
        ))
    }
}

impl Evaluator for ActorCritic {
    fn n_actions(&self) -> usize {
        self.actor.shape.output
    }

    fn observation_len(&self) -> Option<usize> {
        Some(self.input_len())
    }

    fn evaluate(&self, obs: &[f64]) -> Evaluation {
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let logits = self.actor.forward(view).expect("observation length matches network");
        let value = self.critic.forward(view).expect("observation length matches network");
        Evaluation {
            logits: logits.row(0).to_vec(),
            value: value[[0, 0]],
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub observations: Array2<f64>,
    pub policy_targets: Array2<f64>,
    pub value_targets: Array1<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

/// Rows `[start, end)` of a batch, used by tests comparing batch and single-row passes.
pub fn batch_rows(a: &Array2<f64>, start: usize, end: usize) -> Array2<f64> {
    a.slice(s![start..end, ..]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(rng: &mut ChaCha8Rng, width: usize) -> ActorCritic {
        ActorCritic::new(6, 4, width, 3, rng)
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, input: usize, n_actions: usize) -> TrainBatch {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let observations = Array2::from_shape_fn((b, input), |_| normal.sample(rng));
        let mut policy_targets = Array2::from_shape_fn((b, n_actions), |_| rng.random::<f64>());
        for mut row in policy_targets.axis_iter_mut(Axis(0)) {
            let s = row.sum();
            row /= s;
        }
        let value_targets = Array1::from_shape_fn(b, |_| rng.random_range(-1.0..=1.0));
        TrainBatch {
            observations,
            policy_targets,
            value_targets,
        }
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let net = ActorCritic::zeros(32, 14, 16, 5);
        let obs = Array2::from_elem((3, 32), 0.3);
        assert!(net.forward_actor(obs.view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(net.forward_critic(obs.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = ActorCritic::zeros(32, 14, 8, 2);
        let obs = Array2::zeros((1, 31));
        assert!(matches!(net.forward_actor(obs.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_rows_match_single_rows_and_runs_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = tiny(&mut rng, 16);
        let batch = random_batch(&mut rng, 7, 6, 4);
        let all = net.forward_actor(batch.observations.view()).unwrap();
        let again = net.forward_actor(batch.observations.view()).unwrap();
        assert_eq!(all, again);
        let values = net.forward_critic(batch.observations.view()).unwrap();
        for i in 0..7 {
            let one = batch_rows(&batch.observations, i, i + 1);
            let row = net.forward_actor(one.view()).unwrap();
            for (a, b) in row.row(0).iter().zip(all.row(i).iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
            let v = net.forward_critic(one.view()).unwrap()[0];
            assert!((v - values[i]).abs() <= 1e-12);
            assert!(v > -1.0 && v < 1.0);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = tiny(&mut rng, 32);
        let batch = random_batch(&mut rng, 5, 6, 4);
        let cache = net.actor.forward_cached(batch.observations.view()).unwrap();
        for y in &cache.normalized {
            for row in y.axis_iter(Axis(0)) {
                let mean = row.mean().unwrap();
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn policy_loss_is_entropy_at_its_own_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = tiny(&mut rng, 8);
        let mut batch = random_batch(&mut rng, 4, 6, 4);
        let logits = net.forward_actor(batch.observations.view()).unwrap();
        let values = net.forward_critic(batch.observations.view()).unwrap();
        let mut entropy = 0.0;
        for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
            let p = softmax(row.as_slice().unwrap());
            entropy -= p.iter().map(|q| q * q.ln()).sum::<f64>();
            for (j, q) in p.iter().enumerate() {
                batch.policy_targets[[i, j]] = *q;
            }
        }
        batch.value_targets = values;
        let (loss, _) = net.loss_and_grads(&batch, 1.0).unwrap();
        assert!((loss.policy - entropy / 4.0).abs() < 1e-12);
        assert!(loss.value.abs() < 1e-24);
    }

    /// Worst relative gap between analytic gradients and a fourth-order
    /// central difference, over every actor and critic parameter.
    pub(crate) fn check_grads(net: &ActorCritic, batch: &TrainBatch) -> f64 {
        let (_, grads) = net.loss_and_grads(batch, 1.0).unwrap();
        let h = 1e-4;
        let loss_at = |which: usize, i: usize, delta: f64| {
            let mut probe = net.clone();
            let p = if which == 0 { &mut probe.actor.data } else { &mut probe.critic.data };
            p[i] += delta;
            probe.loss_and_grads(batch, 1.0).unwrap().0.total
        };
        let mut worst: f64 = 0.0;
        for which in 0..2 {
            let n = if which == 0 { net.actor.data.len() } else { net.critic.data.len() };
            for i in 0..n {
                let fd = (loss_at(which, i, -2.0 * h) - 8.0 * loss_at(which, i, -h) + 8.0 * loss_at(which, i, h)
                    - loss_at(which, i, 2.0 * h))
                    / (12.0 * h);
                let an = if which == 0 { grads.actor[i] } else { grads.critic[i] };
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-7);
                worst = worst.max(rel);
            }
        }
        worst
    }

    /// Every parameter drawn from `N(0, 0.5²)`, so no layer is near-silent.
    pub(crate) fn random_point(rng: &mut ChaCha8Rng, width: usize) -> ActorCritic {
        let mut net = ActorCritic::zeros(6, 4, width, 3);
        let normal = Normal::new(0.0, 0.5).unwrap();
        for x in net.actor.data.iter_mut().chain(net.critic.data.iter_mut()) {
            *x = normal.sample(rng);
        }
        net
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let net = random_point(&mut rng, 8);
            let batch = random_batch(&mut rng, 5, 6, 4);
            let worst = check_grads(&net, &batch);
            assert!(worst < 1e-4, "worst relative error {worst}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = tiny(&mut rng, 8);
        let last = net.critic.data.len() - 1;
        net.critic.data[last] = f64::NAN;
        let batch = random_batch(&mut rng, 2, 6, 4);
        assert!(matches!(net.loss_and_grads(&batch, 1.0), Err(Error::Divergence(_))));
    }
}
