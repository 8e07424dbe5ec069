//! Point tracking by chained local block matching with a forward-backward
//! consistency check.

use crate::error::{MotionError, Result};
use crate::flow::{local_flow, FlowField};
use crate::image::{GrayImage, Point};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackParams {
    /// Number of frame-to-frame steps in a complete trajectory.
    pub length: usize,
    pub block: usize,
    pub search: usize,
    /// Largest accepted forward-backward round-trip error, in pixels.
    pub fb_threshold: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            length: 10,
            block: 7,
            search: 3,
            fb_threshold: 1.0,
        }
    }
}

/// A tracked point. `points[k]` is its position in frame `start + k`;
/// a valid trajectory holds `length + 1` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: usize,
    pub points: Vec<Point>,
    pub valid: bool,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn displacement(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => a.dist(*b),
            _ => 0.0,
        }
    }

    /// Position in absolute frame `frame`, if covered.
    pub fn at_frame(&self, frame: usize) -> Option<Point> {
        frame.checked_sub(self.start).and_then(|k| self.points.get(k)).copied()
    }
}

/// Forward and backward local flow between frames `t` and `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFlow {
    pub forward: FlowField,
    pub backward: FlowField,
}

pub fn pair_flows(frames: &[GrayImage], block: usize, search: usize) -> Result<Vec<PairFlow>> {
    frames
        .windows(2)
        .map(|p| {
            Ok(PairFlow {
                forward: local_flow(&p[0], &p[1], block, search)?,
                backward: local_flow(&p[1], &p[0], block, search)?,
            })
        })
        .collect()
}

/// One tracking step through a pair, or `None` if the point is lost.
pub fn step(pair: &PairFlow, p: Point, fb_threshold: f64) -> Option<Point> {
    let (u, v) = pair.forward.at_point(p)?;
    let q = Point::new(p.x + u as f64, p.y + v as f64);
    let (w, h) = (pair.forward.width as f64, pair.forward.height as f64);
    if q.x < 0.0 || q.y < 0.0 || q.x > w - 1.0 || q.y > h - 1.0 {
        return None;
    }
    let (bu, bv) = pair.backward.at_point(q)?;
    let back = Point::new(q.x + bu as f64, q.y + bv as f64);
    (back.dist(p) < fb_threshold).then_some(q)
}

/// Tracks `seeds` from frame `start` using precomputed pair flows, where
/// `pairs[t]` links frame `t` to `t + 1`.
pub fn track_with_pairs(
    pairs: &[PairFlow],
    start: usize,
    seeds: &[Point],
    params: &TrackParams,
) -> Result<Vec<Trajectory>> {
    if start + params.length > pairs.len() {
        return Err(MotionError::Config(format!(
            "window starting at frame {start} needs {} frames, clip has {}",
            params.length + 1,
            pairs.len() + 1
        )));
    }
    Ok(seeds
        .iter()
        .map(|&seed| {
            let mut points = Vec::with_capacity(params.length + 1);
            points.push(seed);
            let mut valid = true;
            for k in 0..params.length {
                match step(&pairs[start + k], points[k], params.fb_threshold) {
                    Some(q) => points.push(q),
                    None => {
                        valid = false;
                        break;
                    }
                }
            }
            Trajectory { start, points, valid }
        })
        .collect())
}

/// Tracks `seeds` from the first frame of `frames` for `params.length` steps.
pub fn track_trajectories(
    frames: &[GrayImage],
    seeds: &[Point],
    params: &TrackParams,
) -> Result<Vec<Trajectory>> {
    if frames.len() < params.length + 1 {
        return Err(MotionError::Config(format!(
            "tracking {} steps needs {} frames, got {}",
            params.length,
            params.length + 1,
            frames.len()
        )));
    }
    let pairs = pair_flows(&frames[..=params.length], params.block, params.search)?;
    track_with_pairs(&pairs, 0, seeds, params)
}
