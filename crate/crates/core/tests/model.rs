//! Model-level behaviour: whole-model gradients, ConvLSTM, freezing, the MS
//! side branch, CAM attention and the multitask action grid.

use egoms_core::gradcheck::{model_grad_check, parameter_name, tiny_model};
use egoms_core::model::{
    cam_attention, class_scores, convlstm_step, init_params, model_forward, multitask_action_prob, zero_state, Bound,
    Logits, ModelConfig, ParamStore, Tap,
};
use egoms_core::losses::{loss_combined, loss_logits, loss_ms};
use egoms_tensor::gradcheck::DEFAULT_EPS;
use egoms_tensor::rng::stream;
use egoms_tensor::{grad_check_many, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = stream(seed, "test.random");
    Tensor::from_fn(shape, |_| rng.gen_range(lo..hi)).unwrap()
}

fn small() -> ModelConfig {
    ModelConfig {
        input_size: 16,
        stage_channels: [3, 4, 5, 6],
        hidden: 4,
        ms_reduce: 3,
        verbs: 3,
        nouns: 2,
        ..ModelConfig::default()
    }
}

fn logits_of(cfg: &ModelConfig, store: &ParamStore<f64>, frames: &Tensor<f64>, batch: usize, n: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = Bound::constants(&mut tape, store);
    let x = tape.constant(frames.clone());
    let out = model_forward(&mut tape, cfg, &bound, x, batch, n).unwrap();
    class_scores(&tape, out.logits).concat()
}

#[test]
fn tiny_model_gradients_match_central_differences() {
    let cfg = tiny_model();
    for seed in [1, 2] {
        let r = model_grad_check(&cfg, seed).unwrap();
        let name = parameter_name(&cfg, &r).unwrap();
        assert!(r.max_rel_error < 1e-3, "seed {seed}: {name}[{}] {r:?}", r.index);
    }
}

#[test]
fn cam_and_multitask_gradients_match_central_differences() {
    let cfg = ModelConfig {
        cam_on: true,
        multitask: true,
        verbs: 2,
        nouns: 2,
        ..tiny_model()
    };
    let r = model_grad_check(&cfg, 5).unwrap();
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn convlstm_three_steps_gradients() {
    let (b, c, h, s) = (2, 3, 2, 3);
    let inputs = vec![
        random(&[4 * h, c + h, 3, 3], 1, -0.5, 0.5),
        random(&[4 * h], 2, -0.5, 0.5),
        random(&[3 * b, c, s, s], 3, -1.0, 1.0),
    ];
    let r = grad_check_many(
        |tape, v| {
            let mut state = zero_state(tape, b, h, s).unwrap();
            for k in 0..3 {
                let x = tape.slice(v[2], 0, k * b, b)?;
                state = convlstm_step(tape, v[0], v[1], x, state).unwrap();
            }
            let sq = tape.mul(state.h, state.h)?;
            let sc = tape.mul(state.c, state.h)?;
            let total = tape.add(sq, sc)?;
            tape.sum(total)
        },
        &inputs,
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn convlstm_with_zero_weights_and_input_stays_zero() {
    let mut tape: Tape<f64> = Tape::new();
    let w = tape.constant(Tensor::zeros(&[8, 5, 3, 3]).unwrap());
    let bias = tape.constant(Tensor::zeros(&[8]).unwrap());
    let x = tape.constant(Tensor::zeros(&[1, 3, 2, 2]).unwrap());
    let mut state = zero_state(&mut tape, 1, 2, 2).unwrap();
    for _ in 0..3 {
        state = convlstm_step(&mut tape, w, bias, x, state).unwrap();
    }
    assert!(tape.value(state.h).data().iter().all(|&v| v == 0.0));
    assert!(tape.value(state.c).data().iter().all(|&v| v == 0.0));
}

#[test]
fn frozen_lower_blocks_receive_exact_zero_gradients() {
    let cfg = ModelConfig {
        freeze_lower: true,
        ..small()
    };
    let store: ParamStore<f64> = init_params(&cfg, 4).unwrap();
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, &store, true);
    let x = tape.constant(random(&[4, 3, 16, 16], 7, 0.0, 1.0));
    let out = model_forward(&mut tape, &cfg, &bound, x, 2, 2).unwrap();
    let lc = loss_logits(&mut tape, out.logits, &[0, 3]).unwrap();
    let s = cfg.map_side();
    let maps = random(&[2, 2, s * s], 8, 0.0, 1.0);
    let lm = loss_ms(&mut tape, out.motion.unwrap(), &maps, cfg.ms_final).unwrap();
    let loss = loss_combined(&mut tape, lc, Some(lm), 1.0).unwrap();
    tape.backward(loss).unwrap();
    let grads = bound.grads(&tape).unwrap();
    for (name, g) in &grads {
        let zero = g.data().iter().all(|&v| v == 0.0);
        if egoms_core::model::is_lower(name) {
            assert!(zero, "{name} should be frozen");
        } else if name.starts_with("backbone.t5") || name.starts_with("classifier.fc.weight") {
            assert!(!zero, "{name} should train");
        }
    }
}

#[test]
fn ms_head_does_not_change_class_logits() {
    let on = small();
    let off = ModelConfig { ms_on: false, ..small() };
    let with_head: ParamStore<f64> = init_params(&on, 12).unwrap();
    let mut without: ParamStore<f64> = ParamStore::default();
    for (name, value) in with_head.iter().filter(|(n, _)| !n.starts_with("ms_head.")) {
        without.insert(name.clone(), value.clone());
    }
    assert_eq!(without, init_params(&off, 12).unwrap());
    let frames = random(&[6, 3, 16, 16], 13, 0.0, 1.0);
    let a = logits_of(&on, &with_head, &frames, 2, 3);
    let b = logits_of(&off, &without, &frames, 2, 3);
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn reversing_frame_order_changes_logits() {
    let cfg = small();
    let store: ParamStore<f64> = init_params(&cfg, 21).unwrap();
    let n = 3;
    let frames = random(&[n, 3, 16, 16], 22, 0.0, 1.0);
    let plane = frames.numel() / n;
    let reversed: Vec<f64> = (0..n).rev().flat_map(|k| frames.data()[k * plane..(k + 1) * plane].to_vec()).collect();
    let reversed = Tensor::new(frames.shape(), reversed).unwrap();
    let a = logits_of(&cfg, &store, &frames, 1, n);
    let b = logits_of(&cfg, &store, &reversed, 1, n);
    let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-9, "logits ignore frame order: {a:?}");
}

#[test]
fn cam_attention_is_a_distribution_per_frame() {
    let cfg = ModelConfig { cam_on: true, ..small() };
    let store: ParamStore<f64> = init_params(&cfg, 31).unwrap();
    let mut tape = Tape::new();
    let bound = Bound::constants(&mut tape, &store);
    let features = tape.constant(random(&[5, 6, 3, 3], 32, 0.0, 2.0));
    let attn = cam_attention(&mut tape, &bound, features).unwrap();
    assert_eq!(tape.shape(attn), &[5, 1, 3, 3]);
    for frame in tape.value(attn).data().chunks(9) {
        let total: f64 = frame.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(frame.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn multitask_heads_produce_verb_and_noun_logits() {
    let cfg = ModelConfig { multitask: true, ..small() };
    let store: ParamStore<f64> = init_params(&cfg, 41).unwrap();
    let mut tape = Tape::new();
    let bound = Bound::constants(&mut tape, &store);
    let x = tape.constant(random(&[4, 3, 16, 16], 42, 0.0, 1.0));
    let out = model_forward(&mut tape, &cfg, &bound, x, 2, 2).unwrap();
    let Logits::VerbNoun { verb, noun } = out.logits else {
        panic!("expected verb and noun heads");
    };
    assert_eq!(tape.shape(verb), &[2, 3]);
    assert_eq!(tape.shape(noun), &[2, 2]);
    for row in class_scores(&tape, out.logits) {
        assert_eq!(row.len(), 6);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn every_tap_gives_a_square_map() {
    for (tap, side) in [(Tap::T3, 16), (Tap::T4, 8), (Tap::T5, 4)] {
        let cfg = ModelConfig { tap, ..ModelConfig::default() };
        assert_eq!(cfg.map_side(), side);
    }
}

#[test]
fn multitask_ties_resolve_to_lowest_verb_then_noun() {
    let (grid, best) = multitask_action_prob(&[1.0, 1.0, 0.0], &[2.0, 2.0]);
    assert_eq!(best, (0, 0));
    assert_eq!(grid.len(), 6);
    let (_, best) = multitask_action_prob(&[0.0, 3.0, 3.0], &[0.0, 1.0, 1.0]);
    assert_eq!(best, (1, 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn multitask_grid_is_a_distribution(
        verbs in prop::collection::vec(-20.0f64..20.0, 1..6),
        nouns in prop::collection::vec(-20.0f64..20.0, 1..6),
    ) {
        let (grid, (v, n)) = multitask_action_prob(&verbs, &nouns);
        prop_assert_eq!(grid.len(), verbs.len() * nouns.len());
        prop_assert!((grid.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(grid.iter().all(|&p| p >= 0.0));
        let top = grid[v * nouns.len() + n];
        prop_assert!(grid.iter().all(|&p| p <= top));
        prop_assert!(grid[..v * nouns.len() + n].iter().all(|&p| p < top));
    }
}
