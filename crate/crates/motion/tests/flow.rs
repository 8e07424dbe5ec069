mod common;

use common::Texture;
use egoms_motion::flow_rgb::{decode_vector, encode_vector};
use egoms_motion::{camera_flow, dense_flow, encode_flow_rgb, warp_flow, FlowField, FlowParams, Homography, MotionError};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn epe(flow: &FlowField, dx: f32, dy: f32) -> Vec<f64> {
    flow.u
        .iter()
        .zip(&flow.v)
        .map(|(&u, &v)| ((u - dx) as f64).hypot((v - dy) as f64))
        .collect()
}

fn median(mut v: Vec<f32>) -> f32 {
    v.sort_by(f32::total_cmp);
    v[v.len() / 2]
}

#[test]
fn identical_frames_give_zero_flow() {
    let tex = Texture::new(1);
    let a = tex.frame(48, 40, 0.0, 0.0);
    let f = dense_flow(&a, &a, &FlowParams::default()).unwrap();
    assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
}

#[test]
fn integer_shift_median() {
    let tex = Texture::new(2);
    let a = tex.frame(64, 64, 0.0, 0.0);
    let b = tex.frame(64, 64, 2.0, 1.0);
    let f = dense_flow(&a, &b, &FlowParams::default()).unwrap();
    assert!((median(f.u.clone()) - 2.0).abs() <= 0.25);
    assert!((median(f.v.clone()) - 1.0).abs() <= 0.25);
}

#[test]
fn shift_left_three_endpoint_error() {
    let tex = Texture::new(3);
    let a = tex.frame(64, 64, 0.0, 0.0);
    let b = tex.frame(64, 64, -3.0, 0.0);
    let f = dense_flow(&a, &b, &FlowParams::default()).unwrap();
    let e = epe(&f, -3.0, 0.0);
    let mean = e.iter().sum::<f64>() / e.len() as f64;
    assert!(mean < 0.5, "mean endpoint error {mean}");
}

#[test]
fn every_shift_in_range_has_small_error() {
    let tex = Texture::new(4);
    let a = tex.frame(64, 64, 0.0, 0.0);
    for dy in -3..=3 {
        for dx in -3..=3 {
            let b = tex.frame(64, 64, dx as f64, dy as f64);
            let f = dense_flow(&a, &b, &FlowParams::default()).unwrap();
            let e = epe(&f, dx as f32, dy as f32);
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            assert!(mean < 0.5, "shift ({dx},{dy}): {mean}");
        }
    }
}

#[test]
fn too_small_for_pyramid() {
    let tex = Texture::new(5);
    let a = tex.frame(20, 20, 0.0, 0.0);
    let err = dense_flow(&a, &a, &FlowParams::default()).unwrap_err();
    assert!(matches!(err, MotionError::Config(_)));
    let tiny = tex.frame(12, 40, 0.0, 0.0);
    assert!(matches!(
        dense_flow(&tiny, &tiny, &FlowParams { levels: 1, block: 7, search: 3 }),
        Err(MotionError::Config(_))
    ));
}

#[test]
fn camera_flow_examples() {
    let f = camera_flow(&Homography::identity(), 10, 8);
    assert!(f.u.iter().chain(&f.v).all(|&x| x == 0.0));
    let f = camera_flow(&Homography::translation(3.0, -2.0), 10, 8);
    assert!(f.u.iter().all(|&x| x == 3.0) && f.v.iter().all(|&x| x == -2.0));
}

#[test]
fn rotation_flow_grows_linearly_with_radius() {
    let (w, h) = (65usize, 65usize);
    let (cx, cy) = (32.0, 32.0);
    let th = 5f64.to_radians();
    let rot = Matrix3::new(th.cos(), -th.sin(), 0.0, th.sin(), th.cos(), 0.0, 0.0, 0.0, 1.0);
    let to = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
    let from = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
    let hm = Homography(to * rot * from);
    let f = camera_flow(&hm, w, h);
    let chord = 2.0 * (th / 2.0).sin();
    for r in [8usize, 16, 30] {
        let (u, v) = f.at(32 + r, 32).unwrap();
        let mag = (u as f64).hypot(v as f64);
        assert!((mag - chord * r as f64).abs() < 1e-4, "radius {r}: {mag}");
    }
}

#[test]
fn warp_flow_examples() {
    let tex = Texture::new(6);
    let a = tex.frame(32, 32, 0.0, 0.0);
    let b = tex.frame(32, 32, 1.0, 0.0);
    let flow = dense_flow(&a, &b, &FlowParams { levels: 1, block: 7, search: 3 }).unwrap();
    let same = warp_flow(&flow, &flow).unwrap();
    assert!(same.u.iter().chain(&same.v).all(|&x| x == 0.0));
    let zero = FlowField::zeros(32, 32);
    assert_eq!(warp_flow(&flow, &zero).unwrap(), flow);
    assert!(warp_flow(&flow, &FlowField::zeros(31, 32)).is_err());
}

#[test]
fn warp_flow_separates_object_from_pan() {
    // Background pans by (1, 0); a square region moves by (3, 2) on top of it.
    let (w, h) = (64usize, 64usize);
    let bg = Texture::new(7);
    let obj = Texture::new(8);
    let inside = |x: f64, y: f64, ox: f64, oy: f64| x >= 24.0 + ox && x < 40.0 + ox && y >= 24.0 + oy && y < 40.0 + oy;
    let render = |pan: f64, ox: f64, oy: f64| {
        egoms_motion::GrayImage::from_fn(w, h, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            if inside(xf, yf, ox, oy) {
                1.0 - obj.at(xf - ox, yf - oy)
            } else {
                bg.at(xf - pan, yf)
            }
        })
    };
    let a = render(0.0, 0.0, 0.0);
    let b = render(1.0, 3.0, 2.0);
    let flow = dense_flow(&a, &b, &FlowParams::default()).unwrap();
    let cam = camera_flow(&Homography::translation(1.0, 0.0), w, h);
    let warp = warp_flow(&flow, &cam).unwrap();
    let (mut bg_sum, mut bg_n, mut ob_u, mut ob_v, mut ob_n) = (0.0, 0, 0.0, 0.0, 0);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = warp.at(x, y).unwrap();
            let (xf, yf) = (x as f64, y as f64);
            let near_obj = xf >= 18.0 && xf < 48.0 && yf >= 18.0 && yf < 48.0;
            if !near_obj && x >= 4 && y >= 4 && x < w - 4 && y < h - 4 {
                bg_sum += (u as f64).hypot(v as f64);
                bg_n += 1;
            }
            if inside(xf, yf, 0.0, 0.0) && xf >= 28.0 && xf < 36.0 && yf >= 28.0 && yf < 36.0 {
                ob_u += u as f64;
                ob_v += v as f64;
                ob_n += 1;
            }
        }
    }
    let bg_mean = bg_sum / bg_n as f64;
    assert!(bg_mean < 0.5, "background warp {bg_mean}");
    let (mu, mv) = (ob_u / ob_n as f64, ob_v / ob_n as f64);
    assert!((mu - 2.0).abs() < 0.5 && (mv - 2.0).abs() < 0.5, "object warp ({mu}, {mv})");
}

#[test]
fn flow_rgb_examples() {
    let f = FlowField {
        width: 3,
        height: 1,
        u: vec![1.0, 0.0, 0.0],
        v: vec![0.0, 0.0, -2.0],
        valid: vec![true; 3],
    };
    let rgb = encode_flow_rgb(&f, 1.0).unwrap();
    assert_eq!(&rgb[..6], &[1.0, 0.5, 1.0, 0.5, 0.5, 0.0]);
    let rgb = encode_flow_rgb(&f, 4.0).unwrap();
    assert!((rgb[6] - 0.5).abs() < 1e-7 && rgb[7].abs() < 1e-7 && (rgb[8] - 0.5).abs() < 1e-7);
    assert!(encode_flow_rgb(&f, 0.0).is_err());
}

proptest! {
    #[test]
    fn flow_rgb_is_bounded_and_direction_invertible(u in -20.0f32..20.0, v in -20.0f32..20.0, m in 0.1f32..50.0) {
        let c = encode_vector(u, v, m);
        prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mag = (u as f64).hypot(v as f64);
        prop_assume!(mag > 1e-3 && c[2] < 1.0);
        let (du, dv) = decode_vector(c, m);
        let ang = (v as f64).atan2(u as f64);
        let dang = (dv as f64).atan2(du as f64);
        let diff = (ang - dang).sin().abs();
        prop_assert!(diff < 1e-6, "direction drift {}", diff);
    }
}
