//! Central-difference gradient checking in f64.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Worst coordinate found by [`grad_check_many`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Checks the gradient of a scalar function of one tensor.
pub fn grad_check<F>(f: F, input: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let report = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(input), eps)?;
    Ok(report.max_rel_error)
}

/// Checks the gradient with respect to every input of a scalar function.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::Contract(format!("eps must be positive, got {eps}")));
    }
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        scalar_value(&tape, loss)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad_data(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut report = GradReport {
        max_rel_error: 0.0,
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let x = input.data()[i];
            probe[which].data_mut()[i] = x + eps;
            let up = eval(&probe)?;
            probe[which].data_mut()[i] = x - eps;
            let down = eval(&probe)?;
            probe[which].data_mut()[i] = x;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[which][i];
            let err = rel_error(a, numeric);
            if err > report.max_rel_error || err.is_nan() {
                report = GradReport {
                    max_rel_error: err,
                    input: which,
                    index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}

fn scalar_value(tape: &Tape<f64>, loss: Var) -> Result<f64> {
    let v = tape.value(loss);
    if v.numel() != 1 {
        return Err(TensorError::Contract(format!(
            "checked function must return a scalar, got shape {:?}",
            v.shape()
        )));
    }
    Ok(v.data()[0])
}
