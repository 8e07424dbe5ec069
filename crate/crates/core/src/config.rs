//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, keys are namespaced
//! `data.*`, `model.*`, `train.*`, `gt.*` and `ablation.*`. Unknown keys are
//! rejected. [`Config::to_text`] writes every key with its resolved value, so
//! the output alone reproduces a run.

use std::fmt::Display;
use std::str::FromStr;

use egoms_motion::{CornerParams, GtParams, MapParams, RansacParams, TrackParams};

use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, MsFinal, Tap};

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub seed: u64,
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
    pub clips_per_class: usize,
    pub train_fraction: f64,
    pub clip_length: usize,
    pub width: usize,
    pub height: usize,
    pub object_size_min: f64,
    pub object_size_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Peak camera translation per frame, pixels.
    pub camera_shift_max: f64,
    /// Peak camera rotation per frame, degrees.
    pub camera_rotation_max: f64,
    /// Frames are resized to this height (aspect kept) before cropping.
    pub resize_height: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            verbs: vec!["left".into(), "right".into(), "up".into()],
            nouns: vec!["circle".into(), "square".into()],
            clips_per_class: 50,
            train_fraction: 0.8,
            clip_length: 30,
            width: 96,
            height: 72,
            object_size_min: 22.0,
            object_size_max: 26.0,
            speed_min: 1.0,
            speed_max: 1.25,
            camera_shift_max: 0.4,
            camera_rotation_max: 0.2,
            resize_height: 72,
        }
    }
}

impl DataConfig {
    pub fn num_classes(&self) -> usize {
        self.verbs.len() * self.nouns.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub n_frames: usize,
    pub seeds: Vec<u64>,
    pub lr_backbone: f64,
    pub lr_convlstm: f64,
    pub lr_classifier: f64,
    pub lr_ms_head: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub ms_weight: f64,
    pub augment: bool,
    pub save_checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 4,
            n_frames: 7,
            seeds: vec![11, 22, 33],
            lr_backbone: 5e-4,
            lr_convlstm: 1e-3,
            lr_classifier: 1e-3,
            lr_ms_head: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            ms_weight: 1.0,
            augment: true,
            save_checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtConfig {
    pub seed: u64,
    pub trajectory_length: usize,
    pub block: usize,
    pub search: usize,
    pub fb_threshold: f64,
    pub tau_move: f64,
    pub stamp: usize,
    pub harris_k: f64,
    pub nms_radius: usize,
    pub max_corners: usize,
    pub corner_threshold: f64,
    pub homography_matches: usize,
    pub ransac_iters: usize,
    pub inlier_px: f64,
    pub rescale_height: usize,
    /// Side of the stored per-frame maps; 0 uses the T5 tap extent.
    pub map_size: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        let p = GtParams::default();
        Self {
            seed: 0,
            trajectory_length: p.track.length,
            block: p.track.block,
            search: p.track.search,
            fb_threshold: p.track.fb_threshold,
            tau_move: p.map.tau_move,
            stamp: p.map.stamp,
            harris_k: p.corners.k,
            nms_radius: p.corners.nms_radius,
            max_corners: p.corners.max_corners,
            corner_threshold: p.corners.relative_threshold,
            homography_matches: p.homography_matches,
            ransac_iters: p.ransac.iters,
            inlier_px: p.ransac.inlier_px,
            rescale_height: p.rescale_height,
            map_size: 0,
        }
    }
}

impl GtConfig {
    pub fn params(&self) -> GtParams {
        GtParams {
            track: TrackParams {
                length: self.trajectory_length,
                block: self.block,
                search: self.search,
                fb_threshold: self.fb_threshold,
            },
            corners: CornerParams {
                k: self.harris_k,
                nms_radius: self.nms_radius,
                max_corners: self.max_corners,
                relative_threshold: self.corner_threshold,
            },
            homography_matches: self.homography_matches,
            ransac: RansacParams {
                iters: self.ransac_iters,
                inlier_px: self.inlier_px,
            },
            map: MapParams {
                tau_move: self.tau_move,
                stamp: self.stamp,
                size: self.map_size.max(1),
            },
            rescale_height: self.rescale_height,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    /// `default` or a comma-separated list of catalog variant names.
    pub grid: String,
    pub long_frames: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            grid: "default".into(),
            long_frames: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gt: GtConfig,
    pub ablation: AblationConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CoreError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(CoreError::Config(format!("{key}: expected true/false, got {value:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl Config {
    /// Every key, in documentation order, with its current value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let m = &self.model;
        let t = &self.train;
        let g = &self.gt;
        let a = &self.ablation;
        vec![
            ("data.seed", d.seed.to_string()),
            ("data.verbs", d.verbs.join(",")),
            ("data.nouns", d.nouns.join(",")),
            ("data.clips_per_class", d.clips_per_class.to_string()),
            ("data.train_fraction", d.train_fraction.to_string()),
            ("data.clip_length", d.clip_length.to_string()),
            ("data.width", d.width.to_string()),
            ("data.height", d.height.to_string()),
            ("data.object_size_min", d.object_size_min.to_string()),
            ("data.object_size_max", d.object_size_max.to_string()),
            ("data.speed_min", d.speed_min.to_string()),
            ("data.speed_max", d.speed_max.to_string()),
            ("data.camera_shift_max", d.camera_shift_max.to_string()),
            ("data.camera_rotation_max", d.camera_rotation_max.to_string()),
            ("data.resize_height", d.resize_height.to_string()),
            ("model.input_size", m.input_size.to_string()),
            ("model.stage_channels", join(&m.stage_channels)),
            ("model.hidden", m.hidden.to_string()),
            ("model.ms_on", m.ms_on.to_string()),
            ("model.tap", m.tap.to_string()),
            ("model.ms_reduce", m.ms_reduce.to_string()),
            ("model.ms_final", m.ms_final.to_string()),
            ("model.cam_on", m.cam_on.to_string()),
            ("model.cam_position", "pre_lstm".to_string()),
            ("model.freeze_lower", m.freeze_lower.to_string()),
            ("model.multitask", m.multitask.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.n_frames", t.n_frames.to_string()),
            ("train.seeds", join(&t.seeds)),
            ("train.lr_backbone", t.lr_backbone.to_string()),
            ("train.lr_convlstm", t.lr_convlstm.to_string()),
            ("train.lr_classifier", t.lr_classifier.to_string()),
            ("train.lr_ms_head", t.lr_ms_head.to_string()),
            ("train.beta1", t.beta1.to_string()),
            ("train.beta2", t.beta2.to_string()),
            ("train.eps", t.eps.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.ms_weight", t.ms_weight.to_string()),
            ("train.augment", t.augment.to_string()),
            ("train.save_checkpoints", t.save_checkpoints.to_string()),
            ("gt.seed", g.seed.to_string()),
            ("gt.trajectory_length", g.trajectory_length.to_string()),
            ("gt.block", g.block.to_string()),
            ("gt.search", g.search.to_string()),
            ("gt.fb_threshold", g.fb_threshold.to_string()),
            ("gt.tau_move", g.tau_move.to_string()),
            ("gt.stamp", g.stamp.to_string()),
            ("gt.harris_k", g.harris_k.to_string()),
            ("gt.nms_radius", g.nms_radius.to_string()),
            ("gt.max_corners", g.max_corners.to_string()),
            ("gt.corner_threshold", g.corner_threshold.to_string()),
            ("gt.homography_matches", g.homography_matches.to_string()),
            ("gt.ransac_iters", g.ransac_iters.to_string()),
            ("gt.inlier_px", g.inlier_px.to_string()),
            ("gt.rescale_height", g.rescale_height.to_string()),
            ("gt.map_size", g.map_size.to_string()),
            ("ablation.grid", a.grid.clone()),
            ("ablation.long_frames", a.long_frames.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        Config::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.data;
        let m = &mut self.model;
        let t = &mut self.train;
        let g = &mut self.gt;
        match key {
            "data.seed" => d.seed = parse(key, v)?,
            "data.verbs" => d.verbs = parse_list(key, v)?,
            "data.nouns" => d.nouns = parse_list(key, v)?,
            "data.clips_per_class" => d.clips_per_class = parse(key, v)?,
            "data.train_fraction" => d.train_fraction = parse(key, v)?,
            "data.clip_length" => d.clip_length = parse(key, v)?,
            "data.width" => d.width = parse(key, v)?,
            "data.height" => d.height = parse(key, v)?,
            "data.object_size_min" => d.object_size_min = parse(key, v)?,
            "data.object_size_max" => d.object_size_max = parse(key, v)?,
            "data.speed_min" => d.speed_min = parse(key, v)?,
            "data.speed_max" => d.speed_max = parse(key, v)?,
            "data.camera_shift_max" => d.camera_shift_max = parse(key, v)?,
            "data.camera_rotation_max" => d.camera_rotation_max = parse(key, v)?,
            "data.resize_height" => d.resize_height = parse(key, v)?,
            "model.input_size" => m.input_size = parse(key, v)?,
            "model.stage_channels" => {
                let list: Vec<usize> = parse_list(key, v)?;
                m.stage_channels = list.try_into().map_err(|_| {
                    CoreError::Config(format!("{key}: expected four channel counts"))
                })?;
            }
            "model.hidden" => m.hidden = parse(key, v)?,
            "model.ms_on" => m.ms_on = parse_bool(key, v)?,
            "model.tap" => m.tap = parse(key, v)?,
            "model.ms_reduce" => m.ms_reduce = parse(key, v)?,
            "model.ms_final" => m.ms_final = parse::<MsFinal>(key, v)?,
            "model.cam_on" => m.cam_on = parse_bool(key, v)?,
            "model.cam_position" => {
                if v != "pre_lstm" {
                    return Err(CoreError::Config(format!(
                        "{key}: only pre_lstm is supported, got {v:?}"
                    )));
                }
            }
            "model.freeze_lower" => m.freeze_lower = parse_bool(key, v)?,
            "model.multitask" => m.multitask = parse_bool(key, v)?,
            "train.epochs" => t.epochs = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.n_frames" => t.n_frames = parse(key, v)?,
            "train.seeds" => t.seeds = parse_list(key, v)?,
            "train.lr_backbone" => t.lr_backbone = parse(key, v)?,
            "train.lr_convlstm" => t.lr_convlstm = parse(key, v)?,
            "train.lr_classifier" => t.lr_classifier = parse(key, v)?,
            "train.lr_ms_head" => t.lr_ms_head = parse(key, v)?,
            "train.beta1" => t.beta1 = parse(key, v)?,
            "train.beta2" => t.beta2 = parse(key, v)?,
            "train.eps" => t.eps = parse(key, v)?,
            "train.weight_decay" => t.weight_decay = parse(key, v)?,
            "train.ms_weight" => t.ms_weight = parse(key, v)?,
            "train.augment" => t.augment = parse_bool(key, v)?,
            "train.save_checkpoints" => t.save_checkpoints = parse_bool(key, v)?,
            "gt.seed" => g.seed = parse(key, v)?,
            "gt.trajectory_length" => g.trajectory_length = parse(key, v)?,
            "gt.block" => g.block = parse(key, v)?,
            "gt.search" => g.search = parse(key, v)?,
            "gt.fb_threshold" => g.fb_threshold = parse(key, v)?,
            "gt.tau_move" => g.tau_move = parse(key, v)?,
            "gt.stamp" => g.stamp = parse(key, v)?,
            "gt.harris_k" => g.harris_k = parse(key, v)?,
            "gt.nms_radius" => g.nms_radius = parse(key, v)?,
            "gt.max_corners" => g.max_corners = parse(key, v)?,
            "gt.corner_threshold" => g.corner_threshold = parse(key, v)?,
            "gt.homography_matches" => g.homography_matches = parse(key, v)?,
            "gt.ransac_iters" => g.ransac_iters = parse(key, v)?,
            "gt.inlier_px" => g.inlier_px = parse(key, v)?,
            "gt.rescale_height" => g.rescale_height = parse(key, v)?,
            "gt.map_size" => g.map_size = parse(key, v)?,
            "ablation.grid" => self.ablation.grid = v.to_string(),
            "ablation.long_frames" => self.ablation.long_frames = parse(key, v)?,
            _ => return Err(CoreError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("line {}: expected key = value, got {raw:?}", n + 1))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| CoreError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Config::default();
        config.apply_text(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Model configuration with the class count taken from the data grid.
    pub fn model_config(&self) -> ModelConfig {
        let mut m = self.model.clone();
        m.verbs = self.data.verbs.len();
        m.nouns = self.data.nouns.len();
        m
    }

    pub fn map_side(&self) -> usize {
        if self.gt.map_size == 0 {
            self.model.input_size / 16
        } else {
            self.gt.map_size
        }
        .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        let d = &self.data;
        if d.num_classes() < 2 {
            return bad("data.verbs x data.nouns must give at least 2 classes".into());
        }
        let mut names: Vec<&String> = d.verbs.iter().chain(&d.nouns).collect();
        names.sort();
        names.dedup();
        if names.len() != d.verbs.len() + d.nouns.len() {
            return bad("verb and noun names must be unique".into());
        }
        for v in &d.verbs {
            if crate::synth::Direction::from_verb(v).is_none() {
                return bad(format!("data.verbs: unknown motion verb {v:?}"));
            }
        }
        for n in &d.nouns {
            if n.parse::<crate::synth::Shape>().is_err() {
                return bad(format!("data.nouns: unknown shape {n:?}"));
            }
        }
        if d.clips_per_class == 0 {
            return bad("data.clips_per_class must be positive".into());
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return bad("data.train_fraction must lie in (0, 1)".into());
        }
        if d.clip_length < self.gt.trajectory_length + 1 {
            return bad("data.clip_length must cover one trajectory window".into());
        }
        if !(d.object_size_min > 0.0 && d.object_size_min <= d.object_size_max) {
            return bad("data.object_size_min/max must satisfy 0 < min <= max".into());
        }
        if !(d.speed_min >= 0.0 && d.speed_min <= d.speed_max) {
            return bad("data.speed_min/max must satisfy 0 <= min <= max".into());
        }
        if !(0.0..=2.0).contains(&d.camera_shift_max) {
            return bad("data.camera_shift_max must lie in [0, 2] px/frame".into());
        }
        if !(0.0..=1.0).contains(&d.camera_rotation_max) {
            return bad("data.camera_rotation_max must lie in [0, 1] deg/frame".into());
        }
        let resized_w = (d.width * d.resize_height) as f64 / d.height as f64;
        if d.resize_height < self.model.input_size || (resized_w.round() as usize) < self.model.input_size {
            return bad(format!(
                "frames resized to height {} are smaller than the {} crop",
                d.resize_height, self.model.input_size
            ));
        }
        self.model_config().validate()?;
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 || t.n_frames == 0 {
            return bad("train.epochs, train.batch_size and train.n_frames must be positive".into());
        }
        if t.n_frames > d.clip_length {
            return bad("train.n_frames exceeds data.clip_length".into());
        }
        if t.seeds.is_empty() {
            return bad("train.seeds needs at least one seed".into());
        }
        for (k, lr) in [
            ("lr_backbone", t.lr_backbone),
            ("lr_convlstm", t.lr_convlstm),
            ("lr_classifier", t.lr_classifier),
            ("lr_ms_head", t.lr_ms_head),
            ("weight_decay", t.weight_decay),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("train.{k} must be finite and non-negative"));
            }
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) || t.eps <= 0.0 {
            return bad("train.beta1/beta2 must lie in [0,1) and train.eps be positive".into());
        }
        if t.ms_weight != 0.0 && t.ms_weight != 1.0 {
            return bad("train.ms_weight must be 0 or 1".into());
        }
        let g = &self.gt;
        if g.trajectory_length == 0 || g.block == 0 || g.stamp == 0 || g.ransac_iters == 0 {
            return bad("gt.trajectory_length, gt.block, gt.stamp and gt.ransac_iters must be positive".into());
        }
        if g.map_size > d.width.min(d.height) {
            return bad("gt.map_size larger than the frame".into());
        }
        if self.ablation.long_frames == 0 {
            return bad("ablation.long_frames must be positive".into());
        }
        Ok(())
    }
}

impl std::fmt::Display for Tap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Tap::T3 => "T3",
            Tap::T4 => "T4",
            Tap::T5 => "T5",
        })
    }
}

impl FromStr for Tap {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T3" | "t3" => Ok(Tap::T3),
            "T4" | "t4" => Ok(Tap::T4),
            "T5" | "t5" => Ok(Tap::T5),
            _ => Err(CoreError::Config(format!("unknown tap {s:?}"))),
        }
    }
}

impl std::fmt::Display for MsFinal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MsFinal::Softmax => "softmax",
            MsFinal::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for MsFinal {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(MsFinal::Softmax),
            "sigmoid" => Ok(MsFinal::Sigmoid),
            _ => Err(CoreError::Config(format!("unknown ms_final {s:?}"))),
        }
    }
}
