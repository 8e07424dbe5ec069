//! Unsupervised motion labels for video frames.
//!
//! Camera motion between adjacent frames is modelled by a homography fitted
//! with RANSAC to tracked corners. Points tracked for a fixed number of
//! frames whose motion departs from the camera's are labeled moving, and
//! their positions are stamped into per-frame masks.

pub mod corners;
pub mod error;
pub mod flow;
pub mod flow_rgb;
pub mod homography;
pub mod image;
mod matching;
pub mod motion_map;
pub mod pipeline;
pub mod pnm;
pub mod trajectory;

pub use corners::{detect_corners, CornerParams, Keypoint};
pub use error::{MotionError, Result};
pub use flow::{camera_flow, dense_flow, local_flow, warp_flow, FlowField, FlowParams};
pub use flow_rgb::encode_flow_rgb;
pub use homography::{estimate_homography, Homography, HomographyFit, Match, RansacParams};
pub use image::{GrayImage, Point};
pub use motion_map::{build_motion_map, downsample, downsample_mask, MapParams, MotionMap};
pub use pipeline::{clip_motion_masks, mask_iou, spread_seeds, window_start, ClipMotion, GtParams};
pub use trajectory::{track_trajectories, PairFlow, TrackParams, Trajectory};
