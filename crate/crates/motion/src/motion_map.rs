//! Moving/static labeling of trajectories and rasterized motion maps.

use crate::error::{MotionError, Result};
use crate::flow::FlowField;
use crate::image::Point;
use crate::trajectory::Trajectory;

/// Soft `size`×`size` moving map plus its full-resolution binary source.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMap {
    pub size: usize,
    /// Row-major, values in `[0, 1]`.
    pub values: Vec<f32>,
    pub width: usize,
    pub height: usize,
    /// Row-major 0/1 mask.
    pub mask: Vec<u8>,
}

/// Mean per-step residual between a trajectory's motion and the camera flow
/// at its positions. `cam_flows[t]` is the camera flow from frame `t` to
/// `t + 1`. Steps whose camera flow is invalid are skipped.
pub fn mean_residual(traj: &Trajectory, cam_flows: &[FlowField]) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for (k, pair) in traj.points.windows(2).enumerate() {
        let Some(cam) = cam_flows.get(traj.start + k) else { break };
        let Some((cu, cv)) = cam.at_point(pair[0]) else { continue };
        let rx = pair[1].x - pair[0].x - cu as f64;
        let ry = pair[1].y - pair[0].y - cv as f64;
        sum += rx.hypot(ry);
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

pub fn is_moving(traj: &Trajectory, cam_flows: &[FlowField], tau_move: f64) -> bool {
    traj.valid && mean_residual(traj, cam_flows).is_some_and(|r| r > tau_move)
}

/// Binary mask with a `stamp`×`stamp` square centred on each point.
pub fn rasterize(points: &[Point], width: usize, height: usize, stamp: usize) -> Vec<u8> {
    let mut mask = vec![0u8; width * height];
    let lo = (stamp as isize - 1) / 2;
    let hi = stamp as isize / 2;
    for p in points {
        let (cx, cy) = (p.x.round() as isize, p.y.round() as isize);
        for y in (cy - lo).max(0)..=(cy + hi).min(height as isize - 1) {
            for x in (cx - lo).max(0)..=(cx + hi).min(width as isize - 1) {
                mask[y as usize * width + x as usize] = 1;
            }
        }
    }
    mask
}

/// Overlap lengths between `n` unit pixels and `s` equal cells covering them.
fn overlaps(n: usize, s: usize) -> Vec<Vec<(usize, f64)>> {
    let cell = n as f64 / s as f64;
    (0..s)
        .map(|i| {
            let (a, b) = (i as f64 * cell, (i + 1) as f64 * cell);
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(n);
            (first..last)
                .filter_map(|p| {
                    let o = (b.min(p as f64 + 1.0) - a.max(p as f64)).max(0.0);
                    (o > 0.0).then_some((p, o))
                })
                .collect()
        })
        .collect()
}

/// Area-average downsample of a `width`×`height` field to `s`×`s`.
pub fn downsample(values: &[f32], width: usize, height: usize, s: usize) -> Result<Vec<f32>> {
    if s == 0 || s > width || s > height {
        return Err(MotionError::Config(format!(
            "map size {s} does not fit a {width}x{height} image"
        )));
    }
    if values.len() != width * height {
        return Err(MotionError::Shape(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let rows = overlaps(height, s);
    let cols = overlaps(width, s);
    let area = (height as f64 / s as f64) * (width as f64 / s as f64);
    let mut out = Vec::with_capacity(s * s);
    for ry in &rows {
        for cx in &cols {
            let mut acc = 0.0f64;
            for &(y, wy) in ry {
                for &(x, wx) in cx {
                    acc += wy * wx * values[y * width + x] as f64;
                }
            }
            out.push((acc / area).clamp(0.0, 1.0) as f32);
        }
    }
    Ok(out)
}

pub fn downsample_mask(mask: &[u8], width: usize, height: usize, s: usize) -> Result<Vec<f32>> {
    let as_f: Vec<f32> = mask.iter().map(|&m| m as f32).collect();
    downsample(&as_f, width, height, s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapParams {
    pub tau_move: f64,
    pub stamp: usize,
    pub size: usize,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            tau_move: 0.8,
            stamp: 5,
            size: 4,
        }
    }
}

/// Motion map for absolute frame `frame`: stamps at the positions, in that
/// frame, of every valid trajectory classified as moving.
pub fn build_motion_map(
    trajectories: &[Trajectory],
    cam_flows: &[FlowField],
    frame: usize,
    width: usize,
    height: usize,
    params: &MapParams,
) -> Result<MotionMap> {
    if params.size == 0 || params.size > width || params.size > height {
        return Err(MotionError::Config(format!(
            "map size {} does not fit a {width}x{height} image",
            params.size
        )));
    }
    let points: Vec<Point> = trajectories
        .iter()
        .filter(|t| is_moving(t, cam_flows, params.tau_move))
        .filter_map(|t| t.at_frame(frame))
        .collect();
    let mask = rasterize(&points, width, height, params.stamp);
    let values = downsample_mask(&mask, width, height, params.size)?;
    Ok(MotionMap {
        size: params.size,
        values,
        width,
        height,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamp_is_centred() {
        let m = rasterize(&[Point::new(2.0, 2.0)], 5, 5, 3);
        let ones: Vec<usize> = (0..25).filter(|&i| m[i] == 1).collect();
        assert_eq!(ones, vec![6, 7, 8, 11, 12, 13, 16, 17, 18]);
    }

    #[test]
    fn fractional_cells_cover_every_pixel_once() {
        let ov = overlaps(7, 3);
        let mut per_pixel = [0.0f64; 7];
        for cell in &ov {
            for &(p, o) in cell {
                per_pixel[p] += o;
            }
        }
        assert!(per_pixel.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }
}
