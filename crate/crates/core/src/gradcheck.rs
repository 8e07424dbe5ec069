//! Whole-model gradient check on a tiny f64 instance: 8×8 input, two frames,
//! two classes, every parameter perturbed.

use egoms_tensor::gradcheck::DEFAULT_EPS;
use egoms_tensor::rng::stream;
use egoms_tensor::{grad_check_many, GradReport, Tape, Tensor, TensorError};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::losses::{loss_combined, loss_logits, loss_ms};
use crate::model::{init_params, model_forward, Bound, ModelConfig, ParamStore, Tap};

fn to_tensor(e: CoreError) -> TensorError {
    match e {
        CoreError::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    }
}

pub const TINY_BATCH: usize = 2;
pub const TINY_FRAMES: usize = 2;

/// Tiny model with the MS head on T3 (a 2×2 map, so its softmax is not
/// trivially one).
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        input_size: 8,
        stage_channels: [2, 3, 3, 4],
        hidden: 2,
        ms_on: true,
        tap: Tap::T3,
        ms_reduce: 2,
        verbs: 2,
        nouns: 1,
        ..ModelConfig::default()
    }
}

/// Checks `d(L_c + L_ms)/dθ` for every scalar of every parameter of `cfg`
/// against central differences. Inputs, maps and labels are drawn from
/// `seed`.
pub fn model_grad_check(cfg: &ModelConfig, seed: u64) -> Result<GradReport> {
    cfg.validate()?;
    let store: ParamStore<f64> = init_params(cfg, seed)?;
    let names = store.names();
    let values: Vec<Tensor<f64>> = store.iter().map(|(_, v)| v.clone()).collect();
    let mut rng = stream(seed, "gradcheck.inputs");
    let (b, n, size) = (TINY_BATCH, TINY_FRAMES, cfg.input_size);
    let frames = Tensor::from_fn(&[b * n, 3, size, size], |_| rng.gen::<f64>())?;
    let s = cfg.map_side();
    let maps = Tensor::from_fn(&[b, n, s * s], |_| rng.gen::<f64>())?;
    let labels: Vec<usize> = (0..b).map(|i| i % cfg.num_classes()).collect();

    let report = grad_check_many(
        |tape: &mut Tape<f64>, vars| {
            let bound = Bound::from_vars(names.iter().cloned().zip(vars.iter().copied()));
            let x = tape.constant(frames.clone());
            let out = model_forward(tape, cfg, &bound, x, b, n).map_err(to_tensor)?;
            let lc = loss_logits(tape, out.logits, &labels).map_err(to_tensor)?;
            let lms = match out.motion {
                Some(p) => Some(loss_ms(tape, p, &maps, cfg.ms_final).map_err(to_tensor)?),
                None => None,
            };
            loss_combined(tape, lc, lms, 1.0).map_err(to_tensor)
        },
        &values,
        DEFAULT_EPS,
    )?;
    Ok(report)
}

/// Name of the parameter a [`GradReport`] from [`model_grad_check`] points at.
pub fn parameter_name(cfg: &ModelConfig, report: &GradReport) -> Result<String> {
    let store: ParamStore<f64> = init_params(cfg, 0)?;
    Ok(store.names().swap_remove(report.input))
}
