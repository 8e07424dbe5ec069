//! Whole-clip motion labeling: camera motion from per-pair homographies,
//! trajectories over sliding windows, and per-frame moving masks.

use rand::Rng;

use crate::corners::{detect_corners, CornerParams};
use crate::error::{MotionError, Result};
use crate::flow::{camera_flow, FlowField};
use crate::homography::{estimate_homography, Homography, Match, RansacParams};
use crate::image::{GrayImage, Point};
use crate::motion_map::{is_moving, rasterize, MapParams};
use crate::trajectory::{pair_flows, step, track_with_pairs, TrackParams, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtParams {
    pub track: TrackParams,
    /// Trajectory seeds. Defaults to dense seeding: every pixel with a
    /// non-negligible corner response.
    pub corners: CornerParams,
    /// At most this many seeds feed homography estimation, picked
    /// strongest-first from each cell of a coarse grid in turn so that a
    /// high-contrast object cannot dominate the sample.
    pub homography_matches: usize,
    pub ransac: RansacParams,
    pub map: MapParams,
    /// Process frames at this height (aspect kept) and map masks back; 0 keeps native size.
    pub rescale_height: usize,
}

impl Default for GtParams {
    fn default() -> Self {
        Self {
            // A 5×5 tracking block drags fewer background points along
            // with an object's edge than the 7×7 flow block.
            track: TrackParams {
                block: 5,
                ..TrackParams::default()
            },
            corners: CornerParams {
                nms_radius: 0,
                max_corners: 10_000,
                relative_threshold: 0.001,
                ..CornerParams::default()
            },
            homography_matches: 300,
            ransac: RansacParams::default(),
            map: MapParams::default(),
            rescale_height: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMotion {
    pub width: usize,
    pub height: usize,
    /// `homographies[t]` maps frame `t` coordinates to frame `t + 1`.
    pub homographies: Vec<Homography>,
    /// Pairs where estimation failed and the identity was used instead.
    pub fallback_pairs: usize,
    /// One row-major 0/1 mask per frame at native resolution.
    pub masks: Vec<Vec<u8>>,
}

/// First frame of the tracking window used to label frame `t`.
pub fn window_start(t: usize, frames: usize, length: usize) -> usize {
    t.min(frames.saturating_sub(length + 1))
}

fn rescale(frames: &[GrayImage], height: usize) -> Vec<GrayImage> {
    frames
        .iter()
        .map(|f| {
            let w = ((f.width() * height) as f64 / f.height() as f64).round().max(1.0) as usize;
            f.resize(w, height)
        })
        .collect()
}

/// Grid cells per axis used to spread homography seeds.
const SPREAD_GRID: usize = 6;

/// Picks up to `n` of `corners` (sorted strongest first) by taking, round by
/// round, the strongest remaining corner of every grid cell in row-major cell
/// order.
pub fn spread_seeds(corners: &[Point], w: usize, h: usize, n: usize) -> Vec<Point> {
    let cell = |p: &Point| {
        let cx = ((p.x.max(0.0) * SPREAD_GRID as f64 / w as f64) as usize).min(SPREAD_GRID - 1);
        let cy = ((p.y.max(0.0) * SPREAD_GRID as f64 / h as f64) as usize).min(SPREAD_GRID - 1);
        cy * SPREAD_GRID + cx
    };
    let mut buckets: Vec<Vec<Point>> = vec![Vec::new(); SPREAD_GRID * SPREAD_GRID];
    for p in corners {
        buckets[cell(p)].push(*p);
    }
    let mut out = Vec::with_capacity(n.min(corners.len()));
    let mut round = 0;
    while out.len() < n.min(corners.len()) {
        for b in &buckets {
            if let Some(p) = b.get(round) {
                if out.len() == n {
                    break;
                }
                out.push(*p);
            }
        }
        round += 1;
    }
    out
}

fn nearest_resize(mask: &[u8], w: usize, h: usize, nw: usize, nh: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let sy = (((y as f64 + 0.5) * h as f64 / nh as f64) as usize).min(h - 1);
        for x in 0..nw {
            let sx = (((x as f64 + 0.5) * w as f64 / nw as f64) as usize).min(w - 1);
            out.push(mask[sy * w + sx]);
        }
    }
    out
}

pub fn clip_motion_masks<R: Rng + ?Sized>(
    frames: &[GrayImage],
    params: &GtParams,
    rng: &mut R,
) -> Result<ClipMotion> {
    let length = params.track.length;
    if frames.len() < length + 1 {
        return Err(MotionError::Config(format!(
            "clip has {} frames, trajectories need {}",
            frames.len(),
            length + 1
        )));
    }
    let (native_w, native_h) = (frames[0].width(), frames[0].height());
    let scaled;
    let work: &[GrayImage] = if params.rescale_height > 0 && params.rescale_height != native_h {
        scaled = rescale(frames, params.rescale_height);
        &scaled
    } else {
        frames
    };
    let (w, h) = (work[0].width(), work[0].height());
    if params.map.size > w || params.map.size > h {
        return Err(MotionError::Config(format!(
            "map size {} does not fit {w}x{h} frames",
            params.map.size
        )));
    }

    let pairs = pair_flows(work, params.track.block, params.track.search)?;
    let corners: Vec<Vec<Point>> = work
        .iter()
        .map(|f| detect_corners(f, &params.corners).iter().map(|k| k.point()).collect())
        .collect();

    let mut homographies = Vec::with_capacity(pairs.len());
    let mut fallback_pairs = 0;
    for (t, pair) in pairs.iter().enumerate() {
        let matches: Vec<Match> = spread_seeds(&corners[t], w, h, params.homography_matches)
            .into_iter()
            .filter_map(|p| step(pair, p, params.track.fb_threshold).map(|q| Match { from: p, to: q }))
            .collect();
        match estimate_homography(&matches, &params.ransac, rng) {
            Ok(fit) => homographies.push(fit.h),
            Err(MotionError::EstimationFailed(_)) => {
                fallback_pairs += 1;
                homographies.push(Homography::identity());
            }
            Err(e) => return Err(e),
        }
    }
    let cam: Vec<FlowField> = homographies.iter().map(|hm| camera_flow(hm, w, h)).collect();

    let mut windows: Vec<Option<Vec<Trajectory>>> = vec![None; work.len()];
    let mut masks = Vec::with_capacity(work.len());
    for t in 0..work.len() {
        let start = window_start(t, work.len(), length);
        if windows[start].is_none() {
            let trajs = track_with_pairs(&pairs, start, &corners[start], &params.track)?;
            windows[start] = Some(trajs.into_iter().filter(|tr| is_moving(tr, &cam, params.map.tau_move)).collect());
        }
        let moving = windows[start].as_ref().expect("filled above");
        let points: Vec<Point> = moving.iter().filter_map(|tr| tr.at_frame(t)).collect();
        let mask = rasterize(&points, w, h, params.map.stamp);
        masks.push(if (w, h) == (native_w, native_h) {
            mask
        } else {
            nearest_resize(&mask, w, h, native_w, native_h)
        });
    }
    Ok(ClipMotion {
        width: native_w,
        height: native_h,
        homographies,
        fallback_pairs,
        masks,
    })
}

/// Intersection over union of two 0/1 masks; two empty masks score 1.
pub fn mask_iou(a: &[u8], b: &[u8]) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x != 0, y != 0);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
