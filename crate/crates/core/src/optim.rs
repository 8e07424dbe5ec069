//! Adam with bias correction, per-parameter learning rates and optional
//! decoupled weight decay.

use std::collections::BTreeMap;

use egoms_tensor::{Tensor, TensorError};

use crate::error::Result;
use crate::model::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub params: AdamParams,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter in `store` that has a gradient;
    /// `lr(name)` gives its learning rate. A zero rate leaves the parameter
    /// bitwise unchanged.
    pub fn step(
        &mut self,
        store: &mut ParamStore<f32>,
        grads: &BTreeMap<String, Tensor<f32>>,
        lr: impl Fn(&str) -> f64,
    ) -> Result<()> {
        let p = self.params;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - p.beta1.powi(t);
        let bc2 = 1.0 - p.beta2.powi(t);
        for (name, value) in store.iter_mut() {
            let Some(grad) = grads.get(name) else { continue };
            if grad.shape() != value.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("{name}: param {:?} vs grad {:?}", value.shape(), grad.shape()),
                }
                .into());
            }
            let n = value.numel();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let rate = lr(name);
            for (((w, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g as f64;
                *m = p.beta1 * *m + (1.0 - p.beta1) * g;
                *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
                if rate == 0.0 {
                    continue;
                }
                let mh = *m / bc1;
                let vh = *v / bc2;
                let x = *w as f64;
                let x = x - rate * (mh / (vh.sqrt() + p.eps)) - rate * p.weight_decay * x;
                *w = x as f32;
            }
        }
        Ok(())
    }
}
