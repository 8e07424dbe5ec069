//! Flow visualization: direction as `(cos θ, sin θ)` shifted to `[0, 1]`,
//! clamped magnitude in the third channel.

use crate::error::{MotionError, Result};
use crate::flow::FlowField;

pub fn encode_vector(u: f32, v: f32, m_max: f32) -> [f32; 3] {
    let mag = (u as f64).hypot(v as f64);
    if mag == 0.0 {
        return [0.5, 0.5, 0.0];
    }
    let (c, s) = (u as f64 / mag, v as f64 / mag);
    [
        ((c + 1.0) / 2.0) as f32,
        ((s + 1.0) / 2.0) as f32,
        (mag / m_max as f64).min(1.0) as f32,
    ]
}

/// Recovers a flow vector from its encoding; exact up to the magnitude clamp.
pub fn decode_vector(rgb: [f32; 3], m_max: f32) -> (f32, f32) {
    let (c, s) = (2.0 * rgb[0] as f64 - 1.0, 2.0 * rgb[1] as f64 - 1.0);
    let norm = c.hypot(s);
    if norm == 0.0 || rgb[2] == 0.0 {
        return (0.0, 0.0);
    }
    let mag = rgb[2] as f64 * m_max as f64;
    ((c / norm * mag) as f32, (s / norm * mag) as f32)
}

/// Interleaved RGB values in `[0, 1]`, one triple per pixel.
pub fn encode_flow_rgb(flow: &FlowField, m_max: f32) -> Result<Vec<f32>> {
    if !(m_max > 0.0) {
        return Err(MotionError::Config(format!("m_max must be positive, got {m_max}")));
    }
    Ok(flow
        .u
        .iter()
        .zip(&flow.v)
        .zip(&flow.valid)
        .flat_map(|((&u, &v), &ok)| if ok { encode_vector(u, v, m_max) } else { [0.5, 0.5, 0.0] })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_examples() {
        assert_eq!(encode_vector(1.0, 0.0, 1.0), [1.0, 0.5, 1.0]);
        assert_eq!(encode_vector(0.0, 0.0, 1.0), [0.5, 0.5, 0.0]);
        let e = encode_vector(0.0, -2.0, 4.0);
        assert!((e[0] - 0.5).abs() < 1e-7 && e[1].abs() < 1e-7 && (e[2] - 0.5).abs() < 1e-7);
    }
}
