#![allow(dead_code)]

use egoms_motion::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Multi-octave value noise defined everywhere on the plane.
pub struct Texture {
    seed: u64,
}

fn hash(seed: u64, x: i64, y: i64) -> f64 {
    let mut h = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn octave(&self, x: f64, y: f64, cell: f64, salt: u64) -> f64 {
        let (gx, gy) = (x / cell, y / cell);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (fx, fy) = (smooth(gx - x0), smooth(gy - y0));
        let (ix, iy) = (x0 as i64, y0 as i64);
        let s = self.seed.wrapping_add(salt);
        let a = hash(s, ix, iy) * (1.0 - fx) + hash(s, ix + 1, iy) * fx;
        let b = hash(s, ix, iy + 1) * (1.0 - fx) + hash(s, ix + 1, iy + 1) * fx;
        a * (1.0 - fy) + b * fy
    }

    pub fn at(&self, x: f64, y: f64) -> f32 {
        (0.6 * self.octave(x, y, 4.0, 1) + 0.4 * self.octave(x, y, 9.0, 2)) as f32
    }

    /// Frame whose pixel `(x, y)` shows texture point `(x - dx, y - dy)`.
    pub fn frame(&self, w: usize, h: usize, dx: f64, dy: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| self.at(x as f64 - dx, y as f64 - dy))
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clip of a textured square moving over a panning textured background.
pub struct Clip {
    pub frames: Vec<GrayImage>,
    pub masks: Vec<Vec<u8>>,
}

/// `pan` is the camera's per-frame translation, `velocity` the object's
/// per-frame motion in world coordinates; `side == 0` renders no object.
pub fn render_clip(
    seed: u64,
    (w, h): (usize, usize),
    frames: usize,
    pan: (f64, f64),
    velocity: (f64, f64),
    side: f64,
) -> Clip {
    let bg = Texture::new(seed);
    let obj = Texture::new(seed + 1000);
    let start = (w as f64 / 2.0 - side / 2.0 - velocity.0 * frames as f64 / 2.0,
                 h as f64 / 2.0 - side / 2.0 - velocity.1 * frames as f64 / 2.0);
    let mut out = Clip { frames: Vec::new(), masks: Vec::new() };
    for t in 0..frames {
        let (cx, cy) = (pan.0 * t as f64, pan.1 * t as f64);
        let (ox, oy) = (start.0 + velocity.0 * t as f64, start.1 + velocity.1 * t as f64);
        let mut mask = vec![0u8; w * h];
        let img = GrayImage::from_fn(w, h, |x, y| {
            // Pixel (x, y) sees world point (x + cx, y + cy).
            let (wx, wy) = (x as f64 + cx, y as f64 + cy);
            let (lx, ly) = (wx - ox, wy - oy);
            if side > 0.0 && lx >= 0.0 && ly >= 0.0 && lx < side && ly < side {
                mask[y * w + x] = 1;
                0.2 + 0.8 * obj.at(lx, ly)
            } else {
                0.8 * bg.at(wx, wy)
            }
        });
        out.frames.push(img);
        out.masks.push(mask);
    }
    out
}
