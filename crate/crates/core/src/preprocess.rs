//! Frame sampling, resize/crop preprocessing and augmentation. Frames and
//! motion maps go through the same crop and flip, so maps stay aligned with
//! the pixels they label.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Random frame inside each segment.
    Train,
    /// Middle frame of each segment.
    Test,
}

fn check_counts(t: usize, n: usize) -> Result<()> {
    if n == 0 || n > t {
        return Err(CoreError::Config(format!("cannot sample {n} frames from {t}")));
    }
    Ok(())
}

/// Middle frame of each of `n` equal segments: `floor(k·T/N + T/(2N))`.
pub fn test_frames(t: usize, n: usize) -> Result<Vec<usize>> {
    check_counts(t, n)?;
    Ok((0..n).map(|k| (2 * k * t + t) / (2 * n)).collect())
}

/// `n` strictly increasing frame indices from a `t`-frame clip, one per
/// equal segment.
pub fn sample_frames<R: Rng + ?Sized>(t: usize, n: usize, mode: Mode, rng: &mut R) -> Result<Vec<usize>> {
    match mode {
        Mode::Test => test_frames(t, n),
        Mode::Train => {
            check_counts(t, n)?;
            Ok((0..n).map(|k| rng.gen_range(k * t / n..(k + 1) * t / n)).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropPos {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Center,
}

impl CropPos {
    pub const ALL: [CropPos; 5] = [
        CropPos::TopLeft,
        CropPos::TopRight,
        CropPos::BottomLeft,
        CropPos::BottomRight,
        CropPos::Center,
    ];
}

/// Scale-jitter factors applied to the crop side.
pub const SCALES: [f64; 3] = [1.0, 0.875, 0.75];

/// One augmentation draw, shared by every frame and map of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub pos: CropPos,
    pub scale: f64,
    pub flip: bool,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        pos: CropPos::Center,
        scale: 1.0,
        flip: false,
    };
}

/// Draws corner/centre position, jitter scale and flip (p = 0.5). Only the
/// train split may be augmented.
pub fn augment<R: Rng + ?Sized>(split: Split, rng: &mut R) -> Result<Augmentation> {
    if split != Split::Train {
        return Err(CoreError::Contract("augmentation applies to the train split only".into()));
    }
    let pos = CropPos::ALL[rng.gen_range(0..CropPos::ALL.len())];
    let scale = SCALES[rng.gen_range(0..SCALES.len())];
    let flip = rng.gen_bool(0.5);
    Ok(Augmentation { pos, scale, flip })
}

/// Crop window in resized-frame pixels: the square `[x0, x0+side)×[y0, y0+side)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crop {
    pub x0: f64,
    pub y0: f64,
    pub side: f64,
    pub flip: bool,
}

/// Native frame size, the aspect-preserving resize, and the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub resized_width: usize,
    pub resized_height: usize,
    pub out: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize, resize_height: usize, out: usize) -> Result<Self> {
        if width == 0 || height == 0 || resize_height == 0 || out == 0 {
            return Err(CoreError::Config("empty frame geometry".into()));
        }
        let resized_width = ((width * resize_height) as f64 / height as f64).round() as usize;
        if resize_height < out || resized_width < out {
            return Err(CoreError::Config(format!(
                "{width}x{height} resized to {resized_width}x{resize_height} is smaller than the {out} crop"
            )));
        }
        Ok(Self {
            width,
            height,
            resized_width,
            resized_height: resize_height,
            out,
        })
    }

    pub fn center_crop(&self) -> Crop {
        self.crop(&Augmentation::IDENTITY)
    }

    pub fn crop(&self, aug: &Augmentation) -> Crop {
        let side = (self.out as f64 * aug.scale).round();
        let (rx, ry) = (self.resized_width as f64 - side, self.resized_height as f64 - side);
        let (x0, y0) = match aug.pos {
            CropPos::TopLeft => (0.0, 0.0),
            CropPos::TopRight => (rx, 0.0),
            CropPos::BottomLeft => (0.0, ry),
            CropPos::BottomRight => (rx, ry),
            CropPos::Center => ((rx / 2.0).floor(), (ry / 2.0).floor()),
        };
        Crop {
            x0,
            y0,
            side,
            flip: aug.flip,
        }
    }
}

fn bilinear(plane: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = plane[y0 * w + x0] + (plane[y0 * w + x1] - plane[y0 * w + x0]) * fx;
    let bottom = plane[y1 * w + x0] + (plane[y1 * w + x1] - plane[y1 * w + x0]) * fx;
    top + (bottom - top) * fy
}

/// Bilinear resize of a `[3, h, w]` byte frame to `[3, nh, nw]` in [0,1],
/// sampling at pixel centres.
pub fn resize_rgb(frame: &[u8], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    let unit: Vec<f32> = frame.iter().map(|&b| b as f32 / 255.0).collect();
    if (w, h) == (nw, nh) {
        return unit;
    }
    let (sx, sy) = (w as f64 / nw as f64, h as f64 / nh as f64);
    let mut out = Vec::with_capacity(3 * nw * nh);
    for plane in unit.chunks(w * h) {
        for y in 0..nh {
            for x in 0..nw {
                let src_x = (x as f64 + 0.5) * sx - 0.5;
                let src_y = (y as f64 + 0.5) * sy - 0.5;
                out.push(bilinear(plane, w, h, src_x, src_y));
            }
        }
    }
    out
}

/// Samples the crop of a resized `[3, H', W']` frame into `[3, S, S]`.
pub fn crop_resized(resized: &[f32], geom: &Geometry, crop: &Crop) -> Vec<f32> {
    let (w, h, s) = (geom.resized_width, geom.resized_height, geom.out);
    let step = crop.side / s as f64;
    let mut out = Vec::with_capacity(3 * s * s);
    for plane in resized.chunks(w * h) {
        for i in 0..s {
            let y = crop.y0 + (i as f64 + 0.5) * step - 0.5;
            for j in 0..s {
                let jj = if crop.flip { s - 1 - j } else { j };
                let x = crop.x0 + (jj as f64 + 0.5) * step - 0.5;
                out.push(bilinear(plane, w, h, x, y));
            }
        }
    }
    out
}

/// Resize then crop one native `[3, H, W]` byte frame to `[3, S, S]` in [0,1].
pub fn preprocess(frame: &[u8], geom: &Geometry, crop: &Crop) -> Result<Vec<f32>> {
    if frame.len() != 3 * geom.width * geom.height {
        return Err(CoreError::Data(format!(
            "frame has {} bytes, expected 3x{}x{}",
            frame.len(),
            geom.height,
            geom.width
        )));
    }
    let resized = resize_rgb(frame, geom.width, geom.height, geom.resized_width, geom.resized_height);
    Ok(crop_resized(&resized, geom, crop))
}

/// Pixel spans `[a, b)` of `n` unit cells overlapping each of `s` equal
/// parts of `[lo, hi)`, with overlap lengths.
fn spans(lo: f64, hi: f64, n: usize, s: usize) -> Vec<Vec<(usize, f64)>> {
    let cell = (hi - lo) / s as f64;
    (0..s)
        .map(|i| {
            let (a, b) = (lo + i as f64 * cell, lo + (i + 1) as f64 * cell);
            let first = a.floor().max(0.0) as usize;
            let last = (b.ceil().max(0.0) as usize).min(n);
            (first..last)
                .filter_map(|p| {
                    let o = b.min(p as f64 + 1.0) - a.max(p as f64);
                    (o > 0.0).then_some((p, o))
                })
                .collect()
        })
        .collect()
}

/// Area-averaged `s×s` map of a native 0/1 mask over the region a crop
/// covers, mirrored when the crop flips. Row-major.
pub fn crop_map(mask: &[u8], geom: &Geometry, crop: &Crop, s: usize) -> Vec<f32> {
    let kx = geom.resized_width as f64 / geom.width as f64;
    let ky = geom.resized_height as f64 / geom.height as f64;
    let rows = spans(crop.y0 / ky, (crop.y0 + crop.side) / ky, geom.height, s);
    let cols = spans(crop.x0 / kx, (crop.x0 + crop.side) / kx, geom.width, s);
    let area = (crop.side / ky / s as f64) * (crop.side / kx / s as f64);
    let mut out = vec![0.0f32; s * s];
    for (i, ry) in rows.iter().enumerate() {
        for (j, cx) in cols.iter().enumerate() {
            let mut acc = 0.0f64;
            for &(y, wy) in ry {
                for &(x, wx) in cx {
                    acc += wy * wx * mask[y * geom.width + x] as f64;
                }
            }
            let jj = if crop.flip { s - 1 - j } else { j };
            out[i * s + jj] = (acc / area).clamp(0.0, 1.0) as f32;
        }
    }
    out
}

/// Horizontal mirror of a row-major `rows × cols` plane.
pub fn mirror(plane: &[f32], cols: usize) -> Vec<f32> {
    plane
        .chunks(cols)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}

/// Network-ready sample: `N` frames `[N, 3, S, S]`, maps `[N, s²]`, label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frames: Vec<f32>,
    pub maps: Vec<f32>,
    pub label: usize,
    pub size: usize,
    pub map_side: usize,
}

impl Sample {
    /// Mirrors every frame and map; `flip_label` maps each label to the label
    /// of the mirrored action.
    pub fn flipped(&self, flip_label: &[usize]) -> Sample {
        Sample {
            frames: self.frames.chunks(self.size * self.size).flat_map(|p| mirror(p, self.size)).collect(),
            maps: if self.map_side == 0 {
                Vec::new()
            } else {
                self.maps
                    .chunks(self.map_side * self.map_side)
                    .flat_map(|p| mirror(p, self.map_side))
                    .collect()
            },
            label: flip_label[self.label],
            ..self.clone()
        }
    }
}
