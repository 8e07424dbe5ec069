//! Pure shape inference for every tape operation.
//!
//! The tape calls these before computing anything, so output shapes are
//! known from input shapes alone.

use crate::error::{geometry, mismatch, Result, TensorError};
use crate::tensor::check_shape;

fn rank(op: &'static str, shape: &[usize], r: usize) -> Result<()> {
    if shape.len() != r {
        return Err(mismatch(op, format!("expected rank {r}, got {shape:?}")));
    }
    Ok(())
}

/// Output extent of a strided window: `floor((n + 2p - k)/s) + 1`.
pub fn conv_extent(n: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 {
        return None;
    }
    let padded = n + 2 * padding;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

pub fn conv2d(
    input: &[usize],
    weight: &[usize],
    bias: Option<&[usize]>,
    stride: usize,
    padding: usize,
) -> Result<Vec<usize>> {
    rank("conv2d", input, 4)?;
    rank("conv2d", weight, 4)?;
    if stride == 0 {
        return Err(geometry("conv2d", "stride must be >= 1"));
    }
    if input[1] != weight[1] {
        return Err(mismatch(
            "conv2d",
            format!(
                "input has {} channels, weight expects {}",
                input[1], weight[1]
            ),
        ));
    }
    if let Some(b) = bias {
        if b != [weight[0]] {
            return Err(mismatch(
                "conv2d",
                format!("bias {b:?} vs {} output channels", weight[0]),
            ));
        }
    }
    let ho = conv_extent(input[2], weight[2], stride, padding);
    let wo = conv_extent(input[3], weight[3], stride, padding);
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho >= 1 && wo >= 1 => Ok(vec![input[0], weight[0], ho, wo]),
        _ => Err(geometry(
            "conv2d",
            format!("kernel {weight:?} does not fit input {input:?} with padding {padding}"),
        )),
    }
}

pub fn linear(input: &[usize], weight: &[usize], bias: Option<&[usize]>) -> Result<Vec<usize>> {
    rank("linear", input, 2)?;
    rank("linear", weight, 2)?;
    if input[1] != weight[0] {
        return Err(mismatch(
            "linear",
            format!("input {input:?} vs weight {weight:?}"),
        ));
    }
    if let Some(b) = bias {
        if b != [weight[1]] {
            return Err(mismatch("linear", format!("bias {b:?} vs weight {weight:?}")));
        }
    }
    Ok(vec![input[0], weight[1]])
}

/// Pooling window: fixed square window (stride = window) or global.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Window(usize),
    Global,
}

pub fn avg_pool2d(input: &[usize], pool: Pool) -> Result<Vec<usize>> {
    rank("avg_pool2d", input, 4)?;
    match pool {
        Pool::Global => Ok(vec![input[0], input[1], 1, 1]),
        Pool::Window(k) => {
            if k == 0 || k > input[2] || k > input[3] {
                return Err(geometry(
                    "avg_pool2d",
                    format!("window {k} larger than input {input:?}"),
                ));
            }
            Ok(vec![input[0], input[1], input[2] / k, input[3] / k])
        }
    }
}

pub fn reshape(input: &[usize], target: &[usize]) -> Result<Vec<usize>> {
    let n = check_shape(target)?;
    if n != input.iter().product::<usize>() {
        return Err(mismatch(
            "reshape",
            format!("{input:?} -> {target:?} changes element count"),
        ));
    }
    Ok(target.to_vec())
}

/// Keeps the leading axis and folds the rest.
pub fn flatten(input: &[usize]) -> Result<Vec<usize>> {
    if input.len() < 2 {
        return Ok(vec![1, input.iter().product()]);
    }
    Ok(vec![input[0], input[1..].iter().product()])
}

pub fn concat(inputs: &[&[usize]], axis: usize) -> Result<Vec<usize>> {
    let first = inputs
        .first()
        .ok_or_else(|| mismatch("concat", "no inputs"))?;
    if axis >= first.len() {
        return Err(mismatch("concat", format!("axis {axis} on {first:?}")));
    }
    let mut out = first.to_vec();
    for s in &inputs[1..] {
        if s.len() != first.len()
            || s.iter()
                .zip(first.iter())
                .enumerate()
                .any(|(i, (a, b))| i != axis && a != b)
        {
            return Err(mismatch("concat", format!("{first:?} vs {s:?} on axis {axis}")));
        }
        out[axis] += s[axis];
    }
    Ok(out)
}

pub fn slice(input: &[usize], axis: usize, start: usize, len: usize) -> Result<Vec<usize>> {
    if axis >= input.len() {
        return Err(mismatch("slice", format!("axis {axis} on {input:?}")));
    }
    if len == 0 || start + len > input[axis] {
        return Err(TensorError::OutOfRange {
            op: "slice",
            index: start + len,
            bound: input[axis],
        });
    }
    let mut out = input.to_vec();
    out[axis] = len;
    Ok(out)
}

pub fn select_rows(input: &[usize], indices: &[usize]) -> Result<Vec<usize>> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= input[0]) {
        return Err(TensorError::OutOfRange {
            op: "select_rows",
            index: bad,
            bound: input[0],
        });
    }
    let mut out = input.to_vec();
    out[0] = indices.len();
    check_shape(&out)?;
    Ok(out)
}

pub fn select_channel(input: &[usize], channels: &[usize]) -> Result<Vec<usize>> {
    rank("select_channel", input, 4)?;
    if channels.len() != input[0] {
        return Err(mismatch(
            "select_channel",
            format!("{} indices for batch {}", channels.len(), input[0]),
        ));
    }
    if let Some(&bad) = channels.iter().find(|&&c| c >= input[1]) {
        return Err(TensorError::OutOfRange {
            op: "select_channel",
            index: bad,
            bound: input[1],
        });
    }
    Ok(vec![input[0], 1, input[2], input[3]])
}

pub fn channel_mul(features: &[usize], attention: &[usize]) -> Result<Vec<usize>> {
    rank("channel_mul", features, 4)?;
    if attention != [features[0], 1, features[2], features[3]] {
        return Err(mismatch(
            "channel_mul",
            format!("features {features:?} vs attention {attention:?}"),
        ));
    }
    Ok(features.to_vec())
}

pub fn elementwise(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a != b {
        return Err(mismatch(op, format!("{a:?} vs {b:?}")));
    }
    Ok(a.to_vec())
}

pub fn cross_entropy(logits: &[usize], labels: usize) -> Result<Vec<usize>> {
    rank("cross_entropy", logits, 2)?;
    if labels != logits[0] {
        return Err(mismatch(
            "cross_entropy",
            format!("{labels} labels for batch {}", logits[0]),
        ));
    }
    Ok(vec![1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_extent_formula() {
        assert_eq!(conv_extent(64, 3, 2, 1), Some(32));
        assert_eq!(conv_extent(5, 3, 1, 0), Some(3));
        assert_eq!(conv_extent(2, 3, 1, 0), None);
        assert_eq!(conv_extent(1, 3, 2, 1), Some(1));
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_tiny_inputs() {
        assert!(matches!(
            conv2d(&[1, 3, 8, 8], &[4, 2, 3, 3], None, 1, 0),
            Err(TensorError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            conv2d(&[1, 3, 2, 2], &[4, 3, 3, 3], None, 1, 0),
            Err(TensorError::InvalidGeometry { .. })
        ));
        assert!(matches!(
            conv2d(&[1, 3, 8, 8], &[4, 3, 3, 3], None, 0, 0),
            Err(TensorError::InvalidGeometry { .. })
        ));
    }

    #[test]
    fn concat_and_slice() {
        assert_eq!(
            concat(&[&[1, 2, 4, 4], &[1, 2, 4, 4]], 1).unwrap(),
            vec![1, 4, 4, 4]
        );
        assert!(concat(&[&[1, 2, 4, 4], &[1, 2, 3, 4]], 1).is_err());
        assert_eq!(slice(&[2, 8, 3], 1, 2, 4).unwrap(), vec![2, 4, 3]);
        assert!(slice(&[2, 8, 3], 1, 6, 4).is_err());
    }

    #[test]
    fn pooling_shapes() {
        assert_eq!(avg_pool2d(&[2, 3, 8, 8], Pool::Global).unwrap(), vec![2, 3, 1, 1]);
        assert_eq!(avg_pool2d(&[2, 3, 8, 8], Pool::Window(2)).unwrap(), vec![2, 3, 4, 4]);
        assert!(avg_pool2d(&[2, 3, 2, 2], Pool::Window(3)).is_err());
    }
}
