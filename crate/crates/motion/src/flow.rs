//! Dense flow fields: pyramidal block matching, camera-induced flow and
//! their difference.

use crate::error::{MotionError, Result};
use crate::homography::Homography;
use crate::image::{GrayImage, Point};
use crate::matching::{block_match, Center};

/// Per-pixel displacement from one frame into the next.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> Option<(f32, f32)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    /// Flow at the pixel nearest to `p`, if that pixel exists and is valid.
    pub fn at_point(&self, p: Point) -> Option<(f32, f32)> {
        let (x, y) = (p.x.round(), p.y.round());
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        self.at(x as usize, y as usize)
    }

    /// Mean magnitude over valid pixels; `None` when nothing is valid.
    pub fn mean_magnitude(&self) -> Option<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..self.u.len() {
            if self.valid[i] {
                sum += (self.u[i] as f64).hypot(self.v[i] as f64);
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    pub block: usize,
    pub search: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            block: 7,
            search: 3,
        }
    }
}

fn check_pair(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MotionError::Shape(format!(
            "frames are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Single-scale block matching with search centred on zero.
pub fn local_flow(a: &GrayImage, b: &GrayImage, block: usize, search: usize) -> Result<FlowField> {
    check_pair(a, b)?;
    if block == 0 || block % 2 == 0 {
        return Err(MotionError::Config(format!("block size {block} must be odd")));
    }
    let (u, v) = block_match(a, b, None, block, search);
    Ok(FlowField {
        width: a.width(),
        height: a.height(),
        valid: vec![true; u.len()],
        u,
        v,
    })
}

/// Coarse-to-fine block-matching flow from `a` to `b`.
pub fn dense_flow(a: &GrayImage, b: &GrayImage, params: &FlowParams) -> Result<FlowField> {
    check_pair(a, b)?;
    if params.levels == 0 || params.block == 0 || params.block % 2 == 0 {
        return Err(MotionError::Config(format!(
            "need at least one level and an odd block, got {params:?}"
        )));
    }
    let coarsest = 1usize << (params.levels - 1);
    let (w, h) = (a.width(), a.height());
    if w < 16 || h < 16 || w / coarsest < params.block || h / coarsest < params.block {
        return Err(MotionError::Config(format!(
            "{w}x{h} frame is too small for {} pyramid levels with block {}",
            params.levels, params.block
        )));
    }
    let mut pa = vec![a.clone()];
    let mut pb = vec![b.clone()];
    for _ in 1..params.levels {
        let na = pa.last().expect("non-empty").pyr_down();
        let nb = pb.last().expect("non-empty").pyr_down();
        pa.push(na);
        pb.push(nb);
    }

    let mut flow: Option<(usize, usize, Vec<f32>, Vec<f32>)> = None;
    for level in (0..params.levels).rev() {
        let (la, lb) = (&pa[level], &pb[level]);
        let (lw, lh) = (la.width(), la.height());
        let centers: Option<Vec<Center>> = flow.as_ref().map(|(cw, ch, cu, cv)| {
            let mut c = Vec::with_capacity(lw * lh);
            for y in 0..lh {
                for x in 0..lw {
                    let j = (y / 2).min(ch - 1) * cw + (x / 2).min(cw - 1);
                    c.push(((2.0 * cu[j]).round() as i32, (2.0 * cv[j]).round() as i32));
                }
            }
            c
        });
        let (u, v) = block_match(la, lb, centers.as_deref(), params.block, params.search);
        flow = Some(if level > 0 {
            (lw, lh, median3(&u, lw, lh), median3(&v, lw, lh))
        } else {
            (lw, lh, u, v)
        });
    }
    let (_, _, u, v) = flow.expect("at least one level");
    Ok(FlowField {
        width: w,
        height: h,
        valid: vec![true; u.len()],
        u,
        v,
    })
}

/// 3×3 median filter with border clamping; removes isolated mismatches
/// before a coarse estimate seeds the next finer level.
fn median3(values: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(values.len());
    let mut win = [0f32; 9];
    for y in 0..h {
        for x in 0..w {
            let mut k = 0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                    win[k] = values[yy * w + xx];
                    k += 1;
                }
            }
            win.sort_by(f32::total_cmp);
            out.push(win[4]);
        }
    }
    out
}

/// Flow induced by `h` on a `width`×`height` grid: `project(H p) − p`.
pub fn camera_flow(h: &Homography, width: usize, height: usize) -> FlowField {
    let mut f = FlowField::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let p = Point::new(x as f64, y as f64);
            match h.project(p) {
                Some(q) => {
                    f.u[i] = (q.x - p.x) as f32;
                    f.v[i] = (q.y - p.y) as f32;
                }
                None => f.valid[i] = false,
            }
        }
    }
    f
}

/// Optical flow with the camera-induced component removed.
pub fn warp_flow(flow: &FlowField, cam: &FlowField) -> Result<FlowField> {
    if (flow.width, flow.height) != (cam.width, cam.height) {
        return Err(MotionError::Shape(format!(
            "flow is {}x{}, camera flow is {}x{}",
            flow.width, flow.height, cam.width, cam.height
        )));
    }
    Ok(FlowField {
        width: flow.width,
        height: flow.height,
        u: flow.u.iter().zip(&cam.u).map(|(a, b)| a - b).collect(),
        v: flow.v.iter().zip(&cam.v).map(|(a, b)| a - b).collect(),
        valid: flow.valid.iter().zip(&cam.valid).map(|(&a, &b)| a && b).collect(),
    })
}
