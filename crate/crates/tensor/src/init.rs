//! Parameter initialization schemes.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::Result;
use crate::real::Real;
use crate::tensor::{check_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Normal with variance `2 / fan_in`.
    Kaiming,
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
    Zeros,
}

/// `(fan_in, fan_out)` for a parameter shape.
///
/// Conv weights are `[out, in, kh, kw]`; linear weights are `[in, out]`.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (*n, *n),
        [i, o] => (*i, *o),
        [o, i, rest @ ..] => {
            let field: usize = rest.iter().product();
            (i * field, o * field)
        }
        [] => (1, 1),
    }
}

pub fn init_param<T: Real, R: Rng + ?Sized>(
    shape: &[usize],
    scheme: InitScheme,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let n = check_shape(shape)?;
    let (fan_in, fan_out) = fans(shape);
    let data: Vec<T> = match scheme {
        InitScheme::Zeros => vec![T::zero(); n],
        InitScheme::Kaiming => {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| T::of(normal.sample(rng))).collect()
        }
        InitScheme::Xavier => {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let uniform = Uniform::new_inclusive(-a, a);
            (0..n).map(|_| T::of(uniform.sample(rng))).collect()
        }
    };
    Tensor::new(shape, data)
}
