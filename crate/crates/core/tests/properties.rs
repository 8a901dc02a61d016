use ndarray::{Array1, Array2};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tsynth_core::circuit::QuantumCircuit;
use tsynth_core::env::{exact_match, hs_cost, random_masked_circuit, EnvConfig};
use tsynth_core::gates::ActionSpace;
use tsynth_core::net::{ActorCritic, TrainBatch, UniformEvaluator};
use tsynth_core::optim::{adam_step, AdamConfig, AdamState};
use tsynth_core::qasm::{emit_qasm, parse_qasm};
use tsynth_core::synth::{synthesize, EvalConfig, ScoreKind};
use tsynth_core::trainer::ReplayBuffer;

fn circuit(n: usize, len: usize, seed: u64) -> QuantumCircuit {
    let space = ActionSpace::for_qubits(n).unwrap();
    random_masked_circuit(&space, len, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_is_phase_invariant_and_bounded(n in 1usize..=4, a in 0usize..20, b in 0usize..20, seed: u64, phi in 0.0..std::f64::consts::TAU) {
        let u = circuit(n, a, seed);
        let v = circuit(n, b, seed.wrapping_add(1));
        let cost = hs_cost(u.unitary(), v.unitary()).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&cost));
        let shifted = hs_cost(&u.unitary().scale(Complex64::from_polar(1.0, phi)), v.unitary()).unwrap();
        prop_assert!((shifted - cost).abs() <= 1e-12);
        let symmetric = hs_cost(v.unitary(), u.unitary()).unwrap();
        prop_assert!((symmetric - cost).abs() <= 1e-12);
        prop_assert_eq!(cost.abs() < 1e-10, exact_match(u.unitary(), v.unitary()));
    }

    #[test]
    fn qasm_round_trip(n in 1usize..=5, len in 0usize..40, seed: u64) {
        let c = circuit(n, len, seed);
        let back = parse_qasm(&emit_qasm(&c)).unwrap();
        prop_assert_eq!(back.canonical_gates(), c.canonical_gates());
        prop_assert!(back.unitary().approx_eq(c.unitary(), 1e-12));
    }

    #[test]
    fn cached_unitary_matches_naive_product(n in 1usize..=4, len in 0usize..30, seed: u64) {
        let c = circuit(n, len, seed);
        prop_assert!(c.unitary().approx_eq(&c.naive_unitary(), 1e-10));
        prop_assert!(c.unitary().unitarity_error() <= 1e-9);
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(50, 2, 2);
    for i in 0..80 {
        buf.push(&[i as f64, 0.0], &[0.5, 0.5], 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 1_000_000;
    let mut counts = vec![0u64; buf.len()];
    for _ in 0..draws / 1000 {
        for i in buf.sample_indices(&mut rng, 1000) {
            counts[i] += 1;
        }
    }
    let e = draws as f64 / counts.len() as f64;
    let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 {chi2}, p {p}");
}

#[test]
fn small_batch_can_be_overfit() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = ActorCritic::new(8, 5, 32, 2, &mut rng);
    let obs = Array2::from_shape_fn((32, 8), |_| rng.random_range(-1.0..1.0));
    let mut targets = Array2::from_shape_fn((32, 5), |_| rng.random_range(0.0..1.0f64).powi(4));
    for mut row in targets.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    let values = Array1::from_shape_fn(32, |_| rng.random_range(-0.9..0.9));
    let batch = TrainBatch {
        observations: obs,
        policy_targets: targets.clone(),
        value_targets: values,
    };
    // entropy of the targets bounds the cross-entropy from below
    let entropy: f64 = -targets.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>() / 32.0;
    let cfg = AdamConfig {
        lr: 3e-3,
        ..AdamConfig::default()
    };
    let (mut sa, mut sc) = (AdamState::new(net.actor.data.len()), AdamState::new(net.critic.data.len()));
    let first = net.loss_and_grads(&batch, 1.0).unwrap().0;
    let mut last = first;
    for _ in 0..300 {
        let (loss, g) = net.loss_and_grads(&batch, 1.0).unwrap();
        last = loss;
        adam_step(&mut net.actor.data, &g.actor, &mut sa, &cfg).unwrap();
        adam_step(&mut net.critic.data, &g.critic, &mut sc, &cfg).unwrap();
    }
    assert!(last.value < 0.05 * first.value, "{first:?} -> {last:?}");
    assert!(last.policy - entropy < 0.1 * (first.policy - entropy), "{first:?} -> {last:?}, entropy {entropy}");
}

#[test]
fn more_runs_never_hurt() {
    let env = EnvConfig::new(2, 1, 4);
    let net = UniformEvaluator { n_actions: 14 };
    for seed in 0..6 {
        let target = circuit(2, 4, 100 + seed);
        let mut prev: Option<(bool, Option<usize>)> = None;
        for runs in [4, 16, 48] {
            let mut cfg = EvalConfig::new(runs, 14);
            cfg.search.n_sim = 32;
            cfg.score_kind = ScoreKind::MinTotalGates;
            let r = synthesize(target.unitary(), &env, &net, &cfg, seed).unwrap();
            // runs with fewer repetitions are a prefix of larger ones
            if let Some((ok, gates)) = prev {
                assert!(!ok || r.success);
                if let (Some(a), Some(b)) = (gates, r.total_gates) {
                    assert!(b <= a);
                }
            }
            prev = Some((r.success, r.total_gates));
        }
    }
}
