use std::f64::consts::FRAC_PI_2;

use lqnet::dynamics;
use lqnet::model::{encoder_forward, forward, predict, ModelKind, ModelSpec, ParamStore};
use lqnet::optim::{grad_batch, Batch};
use lqnet::qblock;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeded(kind: ModelKind, input_dim: usize, seed: u64) -> (ModelSpec, ParamStore, Vec<f64>) {
    let mut spec = ModelSpec::new(kind, input_dim);
    spec.encoder_hidden = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::init(&spec, &mut rng).unwrap();
    for w in params.head_w.iter_mut() {
        *w = rng.gen_range(-2.0..2.0);
    }
    params.head_b = 0.3;
    let x = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (spec, params, x)
}

/// Straight-line encoder: explicit index loops over the row-major weights.
#[allow(clippy::needless_range_loop)]
fn encoder_oracle(spec: &ModelSpec, p: &ParamStore, x: &[f64]) -> Vec<f64> {
    let mut hidden = vec![0.0; spec.encoder_hidden];
    for j in 0..spec.encoder_hidden {
        let mut z = p.enc_b1[j];
        for k in 0..spec.input_dim {
            z += p.enc_w1[j * spec.input_dim + k] * x[k];
        }
        hidden[j] = z.tanh();
    }
    let mut out = vec![0.0; spec.n_data_qubits];
    for i in 0..spec.n_data_qubits {
        let mut z = p.enc_b2[i];
        for j in 0..spec.encoder_hidden {
            z += p.enc_w2[i * spec.encoder_hidden + j] * hidden[j];
        }
        out[i] = FRAC_PI_2 * (z.tanh() + 1.0);
    }
    out
}

#[test]
fn encoder_matches_straight_line_oracle() {
    for seed in 0..20 {
        let (spec, params, x) = seeded(ModelKind::Lqnet, 8, seed);
        let got = encoder_forward(&spec, &params, &x).unwrap();
        for (a, b) in got.values().iter().zip(encoder_oracle(&spec, &params, &x)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn encoder_rejects_wrong_input_width() {
    let (spec, params, _) = seeded(ModelKind::Qnn, 8, 0);
    assert!(matches!(
        encoder_forward(&spec, &params, &[0.0; 7]),
        Err(lqnet::Error::Shape(_))
    ));
}

#[test]
fn dynamic_forward_is_the_composition_of_its_parts() {
    for kind in [ModelKind::Lqnet, ModelKind::Ctrqnet] {
        let (spec, params, x) = seeded(kind, 8, 21);
        let trace = forward(&spec, &params, &x).unwrap();
        let angles = encoder_forward(&spec, &params, &x).unwrap();
        let s0 = qblock::encode(&angles).unwrap();
        let phi0 = dynamics::initial_hidden(&s0).unwrap();
        let traj = dynamics::integrate(&phi0, &s0, &params.block, &spec.dynamics).unwrap();
        let phi_t = traj.final_hidden().values();
        let logit: f64 = params.head_w.iter().zip(phi_t).map(|(w, p)| w * p).sum::<f64>() + params.head_b;
        assert!((trace.logit - logit).abs() <= 1e-12);
        assert!((trace.probability - 1.0 / (1.0 + (-logit).exp())).abs() <= 1e-12);
        assert_eq!(trace.hidden.len(), spec.dynamics.n_steps + 1);
        for (a, b) in trace.hidden.iter().zip(&traj.hidden) {
            for (u, v) in a.values().iter().zip(b.values()) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn qnn_depth_equals_manual_block_stack() {
    for depth in 0..=4 {
        let (mut spec, params, x) = seeded(ModelKind::Qnn, 5, 30 + depth as u64);
        spec.qnn_depth = depth;
        let trace = forward(&spec, &params, &x).unwrap();
        let mut s = qblock::encode(&encoder_forward(&spec, &params, &x).unwrap()).unwrap();
        for _ in 0..depth {
            qblock::apply_block(&mut s, &params.block).unwrap();
        }
        let r = qblock::readout(&s).unwrap();
        let logit: f64 = params.head_w.iter().zip(r.values()).map(|(w, v)| w * v).sum::<f64>() + params.head_b;
        assert!((trace.logit - logit).abs() <= 1e-12, "depth {depth}");
    }
}

#[test]
fn lqnet_trajectory_respects_the_bound() {
    for seed in 0..50 {
        let (spec, params, x) = seeded(ModelKind::Lqnet, 8, seed);
        let trace = forward(&spec, &params, &x).unwrap();
        let start = trace.hidden[0].max_abs();
        for (k, h) in trace.hidden.iter().enumerate() {
            assert!(h.max_abs() <= start + k as f64 * spec.dynamics.dt + 1e-12);
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let (spec, params, x) = seeded(ModelKind::Ctrqnet, 8, 4);
    let a = forward(&spec, &params, &x).unwrap();
    let b = forward(&spec, &params, &x).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.logit.to_bits(), b.logit.to_bits());
}

#[test]
fn head_bias_gradient_is_p_minus_y() {
    for kind in ModelKind::ALL {
        let (spec, params, x) = seeded(kind, 8, 9);
        for y in [0u8, 1] {
            let p = forward(&spec, &params, &x).unwrap().probability;
            let batch = Batch::new(vec![&x], vec![y]).unwrap();
            let (g, _) = grad_batch(&spec, &params, &batch).unwrap();
            assert!((g.params().head_b - (p - f64::from(y))).abs() <= 1e-15);
        }
    }
}

#[test]
fn zero_head_cuts_the_encoder_chain() {
    for kind in ModelKind::ALL {
        let (spec, mut params, x) = seeded(kind, 8, 10);
        params.head_w.iter_mut().for_each(|w| *w = 0.0);
        let batch = Batch::new(vec![&x, &x], vec![0, 1]).unwrap();
        let (g, _) = grad_batch(&spec, &params, &batch).unwrap();
        let g = g.params();
        for t in [&g.enc_w1, &g.enc_b1, &g.enc_w2, &g.enc_b2] {
            assert!(t.iter().all(|&v| v == 0.0));
        }
        assert!(g.block.angles().iter().all(|&v| v == 0.0));
    }
}

proptest! {
    #[test]
    fn probability_is_strictly_inside_the_unit_interval(seed in any::<u64>()) {
        let (spec, params, x) = seeded(ModelKind::Lqnet, 4, seed);
        let t = forward(&spec, &params, &x).unwrap();
        prop_assert!(t.probability > 0.0 && t.probability < 1.0);
        prop_assert_eq!(predict(&t), u8::from(t.probability >= 0.5));
    }

    #[test]
    fn encoder_angles_stay_in_range(seed in any::<u64>(), scale in 0.1f64..100.0) {
        let (spec, params, x) = seeded(ModelKind::Qnn, 4, seed);
        let x: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let a = encoder_forward(&spec, &params, &x).unwrap();
        prop_assert!(a.values().iter().all(|v| (0.0..=std::f64::consts::PI).contains(v)));
    }
}
