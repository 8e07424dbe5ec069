//! Exhaustive SSD block matching over a per-pixel search window.
//!
//! For every candidate displacement the squared difference image is summed
//! with an integral image, so the cost of a block is O(1) regardless of its
//! size. The cost is the mean squared difference over the part of the block
//! where both frames have pixels; candidates overlapping less than half the
//! block are not considered.

use crate::image::GrayImage;

/// Per-pixel integer search centre `(dx, dy)`.
pub(crate) type Center = (i32, i32);

/// Best displacement `(u, v)` for every pixel of `a` into `b`.
///
/// Ties prefer the displacement closest to the centre, then row-major order
/// of the window. Parabolic subpixel refinement is applied per axis unless
/// the best cost is exactly zero or lies on the window border.
pub(crate) fn block_match(
    a: &GrayImage,
    b: &GrayImage,
    centers: Option<&[Center]>,
    block: usize,
    search: usize,
) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (a.width(), a.height());
    let n = w * h;
    let r = (block / 2) as isize;
    let rr = search as i32;
    let side = 2 * search + 1;
    let window = side * side;
    let zero = vec![(0, 0); n];
    let centers = centers.unwrap_or(&zero);

    let (mut min_dx, mut max_dx, mut min_dy, mut max_dy) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
    for &(cx, cy) in centers {
        min_dx = min_dx.min(cx);
        max_dx = max_dx.max(cx);
        min_dy = min_dy.min(cy);
        max_dy = max_dy.max(cy);
    }

    let pw = w + 2 * r as usize;
    let ph = h + 2 * r as usize;
    // Padded copy of `a`; NaN marks pixels outside the frame.
    let a_pad: Vec<f32> = (0..ph)
        .flat_map(|py| (0..pw).map(move |px| (px as isize - r, py as isize - r)))
        .map(|(x, y)| {
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                f32::NAN
            } else {
                a.get(x as usize, y as usize)
            }
        })
        .collect();
    let stride = pw + 1;
    let mut sum = vec![0f64; stride * (ph + 1)];
    let mut count = vec![0u32; stride * (ph + 1)];
    let mut cost = vec![f64::INFINITY; n * window];
    let span = 2 * r as usize + 1;
    let min_overlap = (span * span).div_ceil(2) as u32;

    for dy in (min_dy - rr)..=(max_dy + rr) {
        for dx in (min_dx - rr)..=(max_dx + rr) {
            for py in 0..ph {
                let (mut row, mut row_n) = (0.0f64, 0u32);
                let by = py as isize - r + dy as isize;
                for px in 0..pw {
                    let bx = px as isize - r + dx as isize;
                    let av = a_pad[py * pw + px];
                    if !av.is_nan() && bx >= 0 && by >= 0 && bx < w as isize && by < h as isize {
                        let diff = av - b.get(bx as usize, by as usize);
                        row += (diff * diff) as f64;
                        row_n += 1;
                    }
                    let k = (py + 1) * stride + px + 1;
                    sum[k] = sum[k - stride] + row;
                    count[k] = count[k - stride] + row_n;
                }
            }
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let (cx, cy) = centers[i];
                    let (ox, oy) = (dx - cx, dy - cy);
                    if ox.abs() > rr || oy.abs() > rr {
                        continue;
                    }
                    let (k11, k01) = ((y + span) * stride + x + span, y * stride + x + span);
                    let (k10, k00) = ((y + span) * stride + x, y * stride + x);
                    let m = count[k11] + count[k00] - count[k01] - count[k10];
                    if m < min_overlap {
                        continue;
                    }
                    let s = sum[k11] - sum[k01] - sum[k10] + sum[k00];
                    cost[i * window + ((oy + rr) as usize) * side + (ox + rr) as usize] = s.max(0.0) / m as f64;
                }
            }
        }
    }

    let mut u = vec![0f32; n];
    let mut v = vec![0f32; n];
    for i in 0..n {
        let c = &cost[i * window..][..window];
        let mut best = (f64::INFINITY, i32::MAX, 0i32, 0i32);
        for oy in -rr..=rr {
            for ox in -rr..=rr {
                let val = c[((oy + rr) as usize) * side + (ox + rr) as usize];
                let key = (val, ox * ox + oy * oy, oy, ox);
                if key.0 < best.0 || (key.0 == best.0 && (key.1, key.2, key.3) < (best.1, best.2, best.3)) {
                    best = key;
                }
            }
        }
        let (c0, _, oy, ox) = best;
        let at = |ox: i32, oy: i32| c[((oy + rr) as usize) * side + (ox + rr) as usize];
        let (mut fx, mut fy) = (0.0, 0.0);
        if c0 > 0.0 {
            if ox.abs() < rr {
                fx = parabola(at(ox - 1, oy), c0, at(ox + 1, oy));
            }
            if oy.abs() < rr {
                fy = parabola(at(ox, oy - 1), c0, at(ox, oy + 1));
            }
        }
        let (cx, cy) = centers[i];
        u[i] = (cx + ox) as f32 + fx as f32;
        v[i] = (cy + oy) as f32 + fy as f32;
    }
    (u, v)
}

/// Vertex offset of the parabola through three equally spaced costs.
fn parabola(minus: f64, mid: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * mid + plus;
    if !(denom.is_finite() && denom > 0.0) {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex() {
        // y = (x - 0.25)^2 sampled at -1, 0, 1
        let f = |x: f64| (x - 0.25).powi(2);
        assert!((parabola(f(-1.0), f(0.0), f(1.0)) - 0.25).abs() < 1e-12);
        assert_eq!(parabola(1.0, 1.0, 1.0), 0.0);
    }
}
