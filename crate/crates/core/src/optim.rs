//! Adam over flat parameter buffers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = vec![0.5, -1.0, 2.0];
        let before = p.clone();
        let mut st = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let cfg = AdamConfig {
            lr: 1e-3,
            ..Default::default()
        };
        for g in [1e-3, 0.7, 50.0] {
            let mut p = vec![0.0];
            let mut st = AdamState::new(1);
            let mut last = 0.0;
            for _ in 0..2000 {
                let before = p[0];
                adam_step(&mut p, &[g], &mut st, &cfg).unwrap();
                last = before - p[0];
            }
            // m̂ = g and v̂ = g², so the step is lr·g/(|g| + eps)
            let expected = cfg.lr * g / (g + cfg.eps);
            assert!((last - expected).abs() < 1e-12, "g={g}: {last} vs {expected}");
            assert!((last - cfg.lr).abs() / cfg.lr < 1e-4);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let center = [1.5, -0.75, 0.25, 3.0];
        let scale = [1.0, 4.0, 0.5, 2.0];
        let mut p = vec![0.0; 4];
        let mut st = AdamState::new(4);
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        for _ in 0..5000 {
            let g: Vec<f64> = (0..4).map(|i| scale[i] * (p[i] - center[i])).collect();
            adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        }
        for i in 0..4 {
            assert!((p[i] - center[i]).abs() < 1e-6, "coord {i}: {}", p[i]);
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        let mut st = AdamState::new(2);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut st, &AdamConfig::default()).is_err());
    }
}
