mod common;

use common::{render_clip, Texture};
use egoms_motion::motion_map::{is_moving, rasterize};
use egoms_motion::{
    build_motion_map, camera_flow, clip_motion_masks, detect_corners, downsample_mask, mask_iou,
    track_trajectories, CornerParams, FlowField, GrayImage, GtParams, Homography, MapParams, MotionError,
    Point, TrackParams, Trajectory,
};

#[test]
fn constant_image_has_no_corners() {
    let img = GrayImage::from_fn(32, 32, |_, _| 0.5);
    assert!(detect_corners(&img, &CornerParams::default()).is_empty());
}

#[test]
fn square_corners_are_found() {
    let img = GrayImage::from_fn(48, 48, |x, y| if (12..32).contains(&x) && (14..30).contains(&y) { 1.0 } else { 0.0 });
    let kps = detect_corners(&img, &CornerParams::default());
    assert_eq!(kps.len(), 4, "{kps:?}");
    // The square occupies pixels 12..=31 by 14..=29.
    for (cx, cy) in [(11.5, 13.5), (31.5, 13.5), (11.5, 29.5), (31.5, 29.5)] {
        let near = kps.iter().any(|k| (k.x as f64 - cx).abs() <= 1.0 && (k.y as f64 - cy).abs() <= 1.0);
        assert!(near, "no corner near ({cx}, {cy}): {kps:?}");
    }
}

#[test]
fn corners_follow_documented_order() {
    let tex = Texture::new(3);
    let img = GrayImage::from_fn(64, 48, |x, y| tex.at(x as f64, y as f64));
    let kps = detect_corners(&img, &CornerParams::default());
    assert!(kps.len() > 10);
    for pair in kps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        assert!(a.response > b.response || (a.response == b.response && (a.y, a.x) < (b.y, b.x)));
    }
    assert!(kps.len() <= 200);
}

fn seeds_on_grid(w: usize, h: usize, step: usize) -> Vec<Point> {
    let mut s = Vec::new();
    for y in (step..h - step).step_by(step) {
        for x in (step..w - step).step_by(step) {
            s.push(Point::new(x as f64, y as f64));
        }
    }
    s
}

#[test]
fn static_scene_trajectories_stay_put() {
    let clip = render_clip(1, (64, 48), 11, (0.0, 0.0), (0.0, 0.0), 0.0);
    let trajs = track_trajectories(&clip.frames, &seeds_on_grid(64, 48, 6), &TrackParams::default()).unwrap();
    let valid: Vec<&Trajectory> = trajs.iter().filter(|t| t.valid).collect();
    assert!(!valid.is_empty());
    assert!(valid.iter().all(|t| t.displacement() < 0.5 && t.steps() == 10));
}

#[test]
fn moving_object_trajectories_span_its_path() {
    let clip = render_clip(2, (80, 56), 11, (0.0, 0.0), (1.0, 0.0), 20.0);
    // Object starts at x = 30 - 5 = 25, y = 18 and spans 20 px.
    let seeds: Vec<Point> = (0..3).flat_map(|i| (0..3).map(move |j| Point::new(30.0 + 4.0 * i as f64, 24.0 + 4.0 * j as f64))).collect();
    let trajs = track_trajectories(&clip.frames, &seeds, &TrackParams::default()).unwrap();
    let valid: Vec<&Trajectory> = trajs.iter().filter(|t| t.valid).collect();
    assert!(valid.len() >= 5, "only {} valid", valid.len());
    for t in valid {
        assert!((t.displacement() - 10.0).abs() <= 1.0, "{}", t.displacement());
    }
}

#[test]
fn leaving_the_frame_invalidates() {
    let clip = render_clip(3, (64, 48), 11, (2.0, 0.0), (0.0, 0.0), 0.0);
    // Camera pans right, so scene points drift left by 2 px per frame.
    let trajs = track_trajectories(&clip.frames, &[Point::new(6.0, 24.0)], &TrackParams::default()).unwrap();
    assert!(!trajs[0].valid);
}

#[test]
fn too_short_window_is_rejected() {
    let clip = render_clip(4, (32, 32), 5, (0.0, 0.0), (0.0, 0.0), 0.0);
    assert!(matches!(
        track_trajectories(&clip.frames, &[], &TrackParams::default()),
        Err(MotionError::Config(_))
    ));
}

#[test]
fn motion_map_examples() {
    let cams = vec![FlowField::zeros(32, 32); 10];
    let still = Trajectory { start: 0, points: vec![Point::new(5.0, 5.0); 11], valid: true };
    let map = build_motion_map(&[still.clone()], &cams, 0, 32, 32, &MapParams::default()).unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));

    let ones = vec![1u8; 32 * 32];
    assert!(downsample_mask(&ones, 32, 32, 4).unwrap().iter().all(|&v| v == 1.0));

    let quadrant: Vec<u8> = (0..32 * 32).map(|i| ((i % 32) >= 16 && (i / 32) < 16) as u8).collect();
    let m = downsample_mask(&quadrant, 32, 32, 4).unwrap();
    for (i, &v) in m.iter().enumerate() {
        let (r, c) = (i / 4, i % 4);
        assert_eq!(v, if r < 2 && c >= 2 { 1.0 } else { 0.0 }, "cell {i}");
    }
    // Non-divisible sizes give fractional coverage.
    let m = downsample_mask(&vec![1u8; 7 * 5], 7, 5, 2).unwrap();
    assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-6));

    assert!(matches!(
        build_motion_map(&[], &cams, 0, 32, 32, &MapParams { size: 40, ..MapParams::default() }),
        Err(MotionError::Config(_))
    ));
}

#[test]
fn moving_threshold_uses_camera_compensation() {
    let pan = camera_flow(&Homography::translation(1.5, 0.0), 40, 40);
    let cams = vec![pan; 10];
    let with_camera = Trajectory {
        start: 0,
        points: (0..11).map(|k| Point::new(5.0 + 1.5 * k as f64, 20.0)).collect(),
        valid: true,
    };
    assert!(!is_moving(&with_camera, &cams, 0.8));
    let against = Trajectory {
        start: 0,
        points: (0..11).map(|k| Point::new(30.0 - 0.5 * k as f64, 20.0)).collect(),
        valid: true,
    };
    assert!(is_moving(&against, &cams, 0.8));
    let mask = rasterize(&against.points[..1], 40, 40, 5);
    assert_eq!(mask.iter().filter(|&&m| m == 1).count(), 25);
}

fn gt_params() -> GtParams {
    GtParams::default()
}

#[test]
fn clip_masks_match_the_moving_object() {
    let clip = render_clip(5, (96, 72), 16, (0.3, 0.2), (1.2, 0.4), 24.0);
    let gt = clip_motion_masks(&clip.frames, &gt_params(), &mut common::rng(1)).unwrap();
    let mean_iou: f64 = gt.masks.iter().zip(&clip.masks).map(|(a, b)| mask_iou(a, b)).sum::<f64>() / gt.masks.len() as f64;
    assert!(mean_iou >= 0.6, "mean IoU {mean_iou}");
}

#[test]
fn static_clip_is_mostly_unlabeled() {
    let clip = render_clip(6, (96, 72), 16, (0.4, -0.3), (0.0, 0.0), 0.0);
    let gt = clip_motion_masks(&clip.frames, &gt_params(), &mut common::rng(2)).unwrap();
    let on: usize = gt.masks.iter().map(|m| m.iter().filter(|&&v| v == 1).count()).sum();
    let frac = on as f64 / (gt.masks.len() * 96 * 72) as f64;
    assert!(frac <= 0.01, "{frac}");
}

#[test]
fn pipeline_is_deterministic() {
    let clip = render_clip(7, (64, 48), 12, (0.3, 0.0), (1.0, 0.5), 14.0);
    let a = clip_motion_masks(&clip.frames, &gt_params(), &mut common::rng(3)).unwrap();
    let b = clip_motion_masks(&clip.frames, &gt_params(), &mut common::rng(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn homography_seeds_are_spread_over_the_frame() {
    // Ten strong corners packed in one cell, then one weak corner elsewhere.
    let mut corners: Vec<Point> = (0..10).map(|i| Point::new(1.0 + i as f64 * 0.1, 1.0)).collect();
    corners.push(Point::new(90.0, 60.0));
    let picked = egoms_motion::spread_seeds(&corners, 96, 72, 2);
    assert_eq!(picked, vec![corners[0], corners[10]]);
    let all = egoms_motion::spread_seeds(&corners, 96, 72, 100);
    assert_eq!(all.len(), corners.len());
}
