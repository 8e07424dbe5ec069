//! Harris corner detection.

use crate::image::{GrayImage, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerParams {
    pub k: f64,
    pub nms_radius: usize,
    pub max_corners: usize,
    /// Responses at or below this fraction of the strongest are dropped.
    pub relative_threshold: f64,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            k: 0.04,
            nms_radius: 4,
            max_corners: 200,
            relative_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

impl Keypoint {
    pub fn point(&self) -> Point {
        Point::new(self.x as f64, self.y as f64)
    }
}

/// Harris response `det(M) − k·trace(M)²` with `M` summed over a 3×3 window.
pub fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut ixx = vec![0f64; w * h];
    let mut iyy = vec![0f64; w * h];
    let mut ixy = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (img.clamped(xi + 1, yi) - img.clamped(xi - 1, yi)) as f64;
            let gy = 0.5 * (img.clamped(xi, yi + 1) - img.clamped(xi, yi - 1)) as f64;
            let i = y * w + x;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let window = |buf: &[f64], x: usize, y: usize| {
        let mut s = 0.0;
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                s += buf[yy * w + xx];
            }
        }
        s
    };
    let mut r = vec![0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (a, b, c) = (window(&ixx, x, y), window(&iyy, x, y), window(&ixy, x, y));
            r[y * w + x] = a * b - c * c - k * (a + b) * (a + b);
        }
    }
    r
}

/// Strongest non-maximum-suppressed Harris corners, ordered by
/// `(response desc, row, col)`.
pub fn detect_corners(img: &GrayImage, params: &CornerParams) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    let r = harris_response(img, params.k);
    let max = r.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let threshold = params.relative_threshold * max;
    let rad = params.nms_radius as isize;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = r[y * w + x];
            if v <= threshold || v <= 0.0 {
                continue;
            }
            // A tie is won by the earlier pixel in row-major order.
            let mut keep = true;
            'scan: for dy in -rad..=rad {
                for dx in -rad..=rad {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if (dx == 0 && dy == 0) || xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    let o = r[yy as usize * w + xx as usize];
                    if o > v || (o == v && (yy, xx) < (y as isize, x as isize)) {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            if keep {
                out.push(Keypoint { x, y, response: v });
            }
        }
    }
    out.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    out.truncate(params.max_corners);
    out
}
