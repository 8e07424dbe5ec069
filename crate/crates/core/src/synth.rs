//! Synthetic clips: textured shapes moving over a textured background seen by
//! a slowly drifting, rotating camera. Rendering is analytic, so every frame
//! comes with an exact object mask and the true camera homography.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use egoms_motion::Homography;
use rand::Rng;

use crate::config::DataConfig;
use crate::error::{CoreError, Result};

/// Objects must keep this many pixels of clearance from every frame edge.
pub const BORDER: usize = 2;
/// Shortest clip that still holds one ten-step trajectory window.
pub const MIN_LENGTH: usize = 11;
/// Per-frame camera limits enforced by [`validate_spec`].
pub const MAX_SHIFT_PER_FRAME: f64 = 2.0;
pub const MAX_ROTATION_DEG_PER_FRAME: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl FromStr for Shape {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Shape::Circle),
            "square" => Ok(Shape::Square),
            "triangle" => Ok(Shape::Triangle),
            _ => Err(CoreError::Config(format!("unknown shape {s:?}"))),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        })
    }
}

impl Shape {
    /// Signed distance from the shape boundary (negative inside) for a point
    /// `(x, y)` relative to the shape centre; `size` is the diameter/side.
    pub fn sdf(self, x: f64, y: f64, size: f64) -> f64 {
        let r = size / 2.0;
        match self {
            Shape::Circle => x.hypot(y) - r,
            Shape::Square => x.abs().max(y.abs()) - r,
            Shape::Triangle => {
                // Equilateral, apex up (image y grows downwards), centred on
                // its centroid; side length = size.
                let inradius = size / (2.0 * 3f64.sqrt());
                let (c, s) = (3f64.sqrt() / 2.0, 0.5);
                let d = [y, c * x - s * y, -c * x - s * y];
                d.into_iter().fold(f64::NEG_INFINITY, f64::max) - inradius
            }
        }
    }
}

/// Motion verbs; the verb of a clip is the direction its object travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
}

impl Direction {
    pub fn from_verb(verb: &str) -> Option<Direction> {
        match verb {
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            _ => None,
        }
    }

    pub fn unit(self) -> (f64, f64) {
        match self {
            Direction::Left => (-1.0, 0.0),
            Direction::Right => (1.0, 0.0),
            Direction::Up => (0.0, -1.0),
            Direction::Down => (0.0, 1.0),
        }
    }

    /// Direction seen in a horizontally mirrored clip.
    pub fn mirrored(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            d => d,
        }
    }

    pub fn verb(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub shape: Shape,
    /// Linear RGB tint in [0,1].
    pub color: [f64; 3],
    pub size: f64,
    /// World position of the centre at frame 0.
    pub start: (f64, f64),
    /// World displacement per frame.
    pub velocity: (f64, f64),
    pub texture_seed: u64,
}

impl ObjectSpec {
    pub fn center(&self, t: usize) -> (f64, f64) {
        let t = t as f64;
        (self.start.0 + self.velocity.0 * t, self.start.1 + self.velocity.1 * t)
    }
}

/// Camera pose of one frame: frame point `p` sees world point
/// `R(theta)·(p − c) + c + (tx, ty)` with `c` the frame centre.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraPose {
    pub tx: f64,
    pub ty: f64,
    /// Radians.
    pub theta: f64,
}

impl CameraPose {
    /// Homography taking frame coordinates to world coordinates.
    pub fn to_world(&self, width: usize, height: usize) -> Homography {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (s, c) = self.theta.sin_cos();
        Homography::from_rows([
            [c, -s, cx + self.tx - c * cx + s * cy],
            [s, c, cy + self.ty - s * cx - c * cy],
            [0.0, 0.0, 1.0],
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub background_seed: u64,
    pub background_color: [f64; 3],
    pub objects: Vec<ObjectSpec>,
    /// One pose per frame.
    pub camera: Vec<CameraPose>,
}

/// Rendered clip with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub width: usize,
    pub height: usize,
    /// `[T, 3, H, W]`, 0–255.
    pub frames: Vec<u8>,
    /// Per frame, row-major 0/1 union of the object masks.
    pub masks: Vec<Vec<u8>>,
    /// Per frame, frame-to-world homography.
    pub cameras: Vec<Homography>,
}

impl VideoClip {
    pub fn length(&self) -> usize {
        self.masks.len()
    }

    /// Frame `t` as `[3, H, W]` bytes.
    pub fn frame(&self, t: usize) -> &[u8] {
        let n = 3 * self.width * self.height;
        &self.frames[t * n..(t + 1) * n]
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((ix as u64).wrapping_mul(0x1F1F_1F1F) ^ (iy as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn octave(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (fx, fy) = (x / cell, y / cell);
    let (ix, iy) = (fx.floor(), fy.floor());
    let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    top + (bottom - top) * ty
}

/// Two-octave value noise in [0,1], continuous in `(x, y)`.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    0.6 * octave(seed, x, y, 4.0) + 0.4 * octave(splitmix(seed), x, y, 9.0)
}

/// Checks bounds-independent spec rules: length, sizes and camera speed.
pub fn validate_spec(spec: &SceneSpec) -> Result<()> {
    let bad = |m: String| Err(CoreError::Config(m));
    if spec.length < MIN_LENGTH {
        return bad(format!("clip length {} < {MIN_LENGTH}", spec.length));
    }
    if spec.camera.len() != spec.length {
        return bad(format!("{} camera poses for {} frames", spec.camera.len(), spec.length));
    }
    if spec.width < 2 * BORDER + 1 || spec.height < 2 * BORDER + 1 {
        return bad("frame too small".into());
    }
    for o in &spec.objects {
        if !(o.size > 0.0 && o.size.is_finite()) {
            return bad(format!("object size {} must be positive", o.size));
        }
    }
    for (t, w) in spec.camera.windows(2).enumerate() {
        let shift = (w[1].tx - w[0].tx).hypot(w[1].ty - w[0].ty);
        let turn = (w[1].theta - w[0].theta).abs().to_degrees();
        if shift > MAX_SHIFT_PER_FRAME + 1e-9 || turn > MAX_ROTATION_DEG_PER_FRAME + 1e-9 {
            return bad(format!(
                "camera step {t}: shift {shift:.3} px, rotation {turn:.3} deg exceed the per-frame limits"
            ));
        }
    }
    Ok(())
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Renders a clip. Fails if any object comes within [`BORDER`] pixels of a
/// frame edge in any frame.
pub fn gen_clip(spec: &SceneSpec) -> Result<VideoClip> {
    validate_spec(spec)?;
    let (w, h) = (spec.width, spec.height);
    let cameras: Vec<Homography> = spec.camera.iter().map(|c| c.to_world(w, h)).collect();
    let mut frames = Vec::with_capacity(spec.length * 3 * w * h);
    let mut masks = Vec::with_capacity(spec.length);
    let mut rgb = vec![0.0f64; 3 * w * h];
    for (t, cam) in cameras.iter().enumerate() {
        let centers: Vec<(f64, f64)> = spec.objects.iter().map(|o| o.center(t)).collect();
        let mut mask = vec![0u8; w * h];
        let m = cam.rows();
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                // The camera is affine, so no perspective divide is needed.
                let wx = m[0][0] * px + m[0][1] * py + m[0][2];
                let wy = m[1][0] * px + m[1][1] * py + m[1][2];
                let lum = 0.7 * value_noise(spec.background_seed, wx, wy);
                let mut color = spec.background_color.map(|c| c * lum);
                for (o, &(cx, cy)) in spec.objects.iter().zip(&centers) {
                    let (qx, qy) = (wx - cx, wy - cy);
                    let d = o.shape.sdf(qx, qy, o.size);
                    let alpha = clamp01(0.5 - d);
                    if d <= 0.0 {
                        mask[y * w + x] = 1;
                    }
                    if alpha > 0.0 {
                        let lum = 0.3 + 0.7 * value_noise(o.texture_seed, qx, qy);
                        for c in 0..3 {
                            color[c] = alpha * o.color[c] * lum + (1.0 - alpha) * color[c];
                        }
                    }
                }
                for c in 0..3 {
                    rgb[c * w * h + y * w + x] = color[c];
                }
            }
        }
        if touches_border(&mask, w, h) {
            return Err(CoreError::Config(format!(
                "object leaves the {BORDER}px safe area in frame {t}"
            )));
        }
        frames.extend(rgb.iter().map(|&v| (clamp01(v) * 255.0).round() as u8));
        masks.push(mask);
    }
    Ok(VideoClip {
        width: w,
        height: h,
        frames,
        masks,
        cameras,
    })
}

fn touches_border(mask: &[u8], w: usize, h: usize) -> bool {
    (0..h).any(|y| {
        (0..w).any(|x| {
            mask[y * w + x] != 0 && (x < BORDER || y < BORDER || x >= w - BORDER || y >= h - BORDER)
        })
    })
}

/// Smooth camera path: each of `tx`, `ty`, `theta` follows one sine period
/// over the clip, with amplitude chosen so the per-frame change stays below
/// the configured maximum.
pub fn camera_path<R: Rng + ?Sized>(length: usize, shift_max: f64, rot_max_deg: f64, rng: &mut R) -> Vec<CameraPose> {
    let omega = 2.0 * PI / length as f64;
    // |d/dt A sin(ωt+φ)| ≤ Aω; the two translation axes share the budget.
    let amp_shift = shift_max / omega / 2f64.sqrt();
    let amp_rot = rot_max_deg.to_radians() / omega;
    let mut wave = |amp: f64| {
        let a = amp * rng.gen_range(0.5..=1.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        move |t: f64| a * ((omega * t + phase).sin() - phase.sin())
    };
    let (fx, fy, fr) = (wave(amp_shift), wave(amp_shift), wave(amp_rot));
    (0..length)
        .map(|t| {
            let t = t as f64;
            CameraPose {
                tx: fx(t),
                ty: fy(t),
                theta: fr(t),
            }
        })
        .collect()
}

/// Saturated red-dominant colour. Nouns differ by shape alone, so the hue
/// stays within one family: a per-clip random hue is a nuisance the small
/// model cannot learn to ignore from a few dozen clips per class.
fn object_tint<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [1.0, rng.gen_range(0.2..=0.5), rng.gen_range(0.2..=0.5)]
}

/// Near-grey colour with brightness in `[0.6, 1]`.
fn background_tint<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let g = rng.gen_range(0.6..=1.0);
    [0; 3].map(|_| g * rng.gen_range(0.9..=1.0))
}

/// Draws a scene of one object of `shape` travelling in `direction`, its path
/// centred in the frame.
pub fn sample_spec<R: Rng + ?Sized>(
    cfg: &DataConfig,
    direction: Direction,
    shape: Shape,
    rng: &mut R,
) -> SceneSpec {
    let (w, h, t) = (cfg.width, cfg.height, cfg.clip_length);
    let size = rng.gen_range(cfg.object_size_min..=cfg.object_size_max);
    let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
    let (ux, uy) = direction.unit();
    let travel = speed * (t as f64 - 1.0);
    let along = rng.gen_range(-2.0..=2.0);
    let across = rng.gen_range(-6.0..=6.0);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let start = (
        cx - ux * (travel / 2.0 + along) + uy.abs() * across,
        cy - uy * (travel / 2.0 + along) + ux.abs() * across,
    );
    let object = ObjectSpec {
        shape,
        color: object_tint(rng),
        size,
        start,
        velocity: (ux * speed, uy * speed),
        texture_seed: rng.gen(),
    };
    let background_seed = rng.gen();
    let background_color = background_tint(rng);
    let camera = camera_path(t, cfg.camera_shift_max, cfg.camera_rotation_max, rng);
    SceneSpec {
        width: w,
        height: h,
        length: t,
        background_seed,
        background_color,
        objects: vec![object],
        camera,
    }
}

/// Samples specs until one renders inside the safe area.
pub fn sample_clip<R: Rng + ?Sized>(
    cfg: &DataConfig,
    direction: Direction,
    shape: Shape,
    rng: &mut R,
) -> Result<(SceneSpec, VideoClip)> {
    const ATTEMPTS: usize = 50;
    let mut last = None;
    for _ in 0..ATTEMPTS {
        let spec = sample_spec(cfg, direction, shape, rng);
        match gen_clip(&spec) {
            Ok(clip) => return Ok((spec, clip)),
            Err(e) => last = Some(e),
        }
    }
    Err(CoreError::Config(format!(
        "no valid {} {} scene in {ATTEMPTS} attempts; last error: {}",
        direction.verb(),
        shape,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}
