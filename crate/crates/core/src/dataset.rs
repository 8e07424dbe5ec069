//! On-disk synthetic dataset.
//!
//! ```text
//! <root>/manifest.json
//! <root>/clips/<clip_id>/frames.sptn         [T,3,H,W] u8
//! <root>/clips/<clip_id>/mask_<t>.pgm        true object mask of frame t
//! <root>/clips/<clip_id>/camera.txt          frame-to-world homography per line
//! <root>/clips/<clip_id>/motion_masks.sptn   [T,H,W] u8 (gen-motion-maps)
//! <root>/clips/<clip_id>/motion_maps.sptn    [T,s,s] f32, centre-crop view
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use egoms_motion::pnm::{read_pgm, write_pgm};
use egoms_motion::{clip_motion_masks, mask_iou, GrayImage};
use egoms_tensor::rng::stream;
use egoms_tensor::{sptn, SptnArray, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, DataConfig};
use crate::error::{CoreError, Result};
use crate::preprocess::{crop_map, preprocess, sample_frames, test_frames, Augmentation, Geometry, Mode, Sample, Split};
use crate::synth::{sample_clip, Direction, Shape, VideoClip};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub clip_id: String,
    /// Relative to the dataset root.
    pub path: String,
    pub label: usize,
    pub verb: String,
    pub noun: String,
    pub split: Split,
    #[serde(rename = "T")]
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub classes: Vec<String>,
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
    pub width: usize,
    pub height: usize,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// SHA-256 of the serialized manifest, hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Label of each class under a horizontal flip (left and right swap).
    pub fn flip_labels(&self) -> Vec<usize> {
        let nouns = self.nouns.len();
        (0..self.classes.len())
            .map(|label| {
                let (v, n) = (label / nouns, label % nouns);
                let mirrored = Direction::from_verb(&self.verbs[v]).map(|d| d.mirrored().verb());
                let v2 = mirrored
                    .and_then(|m| self.verbs.iter().position(|x| x == m))
                    .unwrap_or(v);
                v2 * nouns + n
            })
            .collect()
    }

    pub fn read(root: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(root.join(MANIFEST))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(CoreError::Data(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }
}

pub fn class_name(verb: &str, noun: &str) -> String {
    format!("{verb}_{noun}")
}

fn write_clip(dir: &Path, clip: &VideoClip) -> Result<()> {
    fs::create_dir_all(dir)?;
    let t = clip.length();
    sptn::write(
        dir.join("frames.sptn"),
        &SptnArray::u8(&[t, 3, clip.height, clip.width], clip.frames.clone())?,
    )?;
    for (i, mask) in clip.masks.iter().enumerate() {
        let scaled: Vec<u8> = mask.iter().map(|&m| m * 255).collect();
        write_pgm(dir.join(format!("mask_{i:03}.pgm")), clip.width, clip.height, &scaled)?;
    }
    let camera: String = clip
        .cameras
        .iter()
        .map(|h| {
            let r = h.rows();
            let vals: Vec<String> = r.iter().flatten().map(|v| v.to_string()).collect();
            vals.join(" ") + "\n"
        })
        .collect();
    fs::write(dir.join("camera.txt"), camera)?;
    Ok(())
}

/// Renders the full class grid under `root` and writes the manifest last.
/// On failure everything this call created is removed.
pub fn gen_dataset(cfg: &DataConfig, root: &Path) -> Result<Manifest> {
    if root.join(MANIFEST).exists() || root.join("clips").exists() {
        return Err(CoreError::Config(format!("{} already holds a dataset", root.display())));
    }
    let result = write_dataset(cfg, root);
    if result.is_err() {
        let _ = fs::remove_dir_all(root.join("clips"));
        let _ = fs::remove_file(root.join(MANIFEST));
    }
    result
}

fn write_dataset(cfg: &DataConfig, root: &Path) -> Result<Manifest> {
    let train_per_class = ((cfg.clips_per_class as f64 * cfg.train_fraction).round() as usize)
        .clamp(1, cfg.clips_per_class.saturating_sub(1).max(1));
    let mut entries = Vec::new();
    let mut classes = Vec::new();
    for verb in &cfg.verbs {
        let direction = Direction::from_verb(verb)
            .ok_or_else(|| CoreError::Config(format!("unknown verb {verb:?}")))?;
        for noun in &cfg.nouns {
            let shape: Shape = noun.parse()?;
            let label = classes.len();
            classes.push(class_name(verb, noun));
            for k in 0..cfg.clips_per_class {
                let clip_id = format!("{verb}_{noun}_{k:03}");
                let mut rng = stream(cfg.seed, &format!("synth.{clip_id}"));
                let (_, clip) = sample_clip(cfg, direction, shape, &mut rng)?;
                let path = format!("clips/{clip_id}");
                write_clip(&root.join(&path), &clip)?;
                entries.push(Entry {
                    clip_id,
                    path,
                    label,
                    verb: verb.clone(),
                    noun: noun.clone(),
                    split: if k < train_per_class { Split::Train } else { Split::Test },
                    t: clip.length(),
                });
            }
        }
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        classes,
        verbs: cfg.verbs.clone(),
        nouns: cfg.nouns.clone(),
        width: cfg.width,
        height: cfg.height,
        entries,
    };
    fs::write(root.join(MANIFEST), manifest.to_json()?)?;
    Ok(manifest)
}

/// Luma of a `[3, H, W]` byte frame, scaled to [0,1].
pub fn to_gray(frame: &[u8], w: usize, h: usize) -> GrayImage {
    let n = w * h;
    GrayImage::from_fn(w, h, |x, y| {
        let p = y * w + x;
        (0.299 * frame[p] as f32 + 0.587 * frame[n + p] as f32 + 0.114 * frame[2 * n + p] as f32) / 255.0
    })
}

/// Per-clip outcome of the motion ground-truth pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GtClipReport {
    pub clip_id: String,
    /// Mean over frames of IoU(predicted mask, true object mask).
    pub iou: f64,
    pub moving_fraction: f64,
    pub fallback_pairs: usize,
}

/// Reads the stored frames of one clip: `(T, bytes [T,3,H,W])`.
pub fn read_frames(root: &Path, entry: &Entry, w: usize, h: usize) -> Result<Vec<u8>> {
    let (shape, data) = sptn::read(root.join(&entry.path).join("frames.sptn"))?.into_u8()?;
    if shape != [entry.t, 3, h, w] {
        return Err(CoreError::Data(format!("{}: frames shape {shape:?}", entry.clip_id)));
    }
    Ok(data)
}

pub fn read_true_masks(root: &Path, entry: &Entry) -> Result<Vec<Vec<u8>>> {
    (0..entry.t)
        .map(|i| {
            let (_, _, data) = read_pgm(root.join(&entry.path).join(format!("mask_{i:03}.pgm")))?;
            Ok(data.into_iter().map(|v| (v > 127) as u8).collect())
        })
        .collect()
}

/// Runs the motion ground-truth pipeline on every clip and stores the
/// full-resolution masks and the centre-crop `s×s` maps next to the frames.
pub fn gen_motion_maps(root: &Path, cfg: &Config) -> Result<Vec<GtClipReport>> {
    let manifest = Manifest::read(root)?;
    let (w, h) = (manifest.width, manifest.height);
    let params = cfg.gt.params();
    let geom = Geometry::new(w, h, cfg.data.resize_height, cfg.model.input_size)?;
    let crop = geom.center_crop();
    let s = cfg.map_side();
    let mut reports = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let frames = read_frames(root, entry, w, h)?;
        let gray: Vec<GrayImage> = frames.chunks(3 * w * h).map(|f| to_gray(f, w, h)).collect();
        let mut rng = stream(cfg.gt.seed, &format!("gt.{}", entry.clip_id));
        let motion = clip_motion_masks(&gray, &params, &mut rng)?;
        let dir = root.join(&entry.path);
        let flat: Vec<u8> = motion.masks.concat();
        sptn::write(dir.join("motion_masks.sptn"), &SptnArray::u8(&[entry.t, h, w], flat)?)?;
        let maps: Vec<f32> = motion.masks.iter().flat_map(|m| crop_map(m, &geom, &crop, s)).collect();
        sptn::write(dir.join("motion_maps.sptn"), &Tensor::new(&[entry.t, s, s], maps)?.into())?;

        let truth = read_true_masks(root, entry)?;
        let iou = motion.masks.iter().zip(&truth).map(|(a, b)| mask_iou(a, b)).sum::<f64>() / entry.t as f64;
        let moving = motion.masks.iter().flatten().filter(|&&v| v != 0).count() as f64 / (entry.t * w * h) as f64;
        reports.push(GtClipReport {
            clip_id: entry.clip_id.clone(),
            iou,
            moving_fraction: moving,
            fallback_pairs: motion.fallback_pairs,
        });
    }
    Ok(reports)
}

pub fn gt_report_csv(reports: &[GtClipReport]) -> String {
    let mut out = String::from("clip_id,iou,moving_fraction,fallback_pairs\n");
    for r in reports {
        out.push_str(&format!("{},{},{},{}\n", r.clip_id, r.iou, r.moving_fraction, r.fallback_pairs));
    }
    out
}

/// A clip held in memory.
#[derive(Debug, Clone)]
pub struct Clip {
    pub entry: Entry,
    pub frames: Vec<u8>,
    /// GT motion masks `[T, H, W]` when generated.
    pub motion: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub clips: Vec<Clip>,
}

impl Dataset {
    /// Loads frames and, when present, motion masks of every clip. With
    /// `require_motion` a clip without masks is an error.
    pub fn load(root: &Path, require_motion: bool) -> Result<Dataset> {
        let manifest = Manifest::read(root)?;
        let (w, h) = (manifest.width, manifest.height);
        let mut clips = Vec::with_capacity(manifest.entries.len());
        for entry in &manifest.entries {
            let frames = read_frames(root, entry, w, h)?;
            let path = root.join(&entry.path).join("motion_masks.sptn");
            let motion = if path.exists() {
                let (shape, data) = sptn::read(&path)?.into_u8()?;
                if shape != [entry.t, h, w] {
                    return Err(CoreError::Data(format!("{}: motion mask shape {shape:?}", entry.clip_id)));
                }
                Some(data)
            } else if require_motion {
                return Err(CoreError::Data(format!(
                    "{}: no motion masks; run gen-motion-maps first",
                    entry.clip_id
                )));
            } else {
                None
            };
            clips.push(Clip {
                entry: entry.clone(),
                frames,
                motion,
            });
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            clips,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.clips.len())
            .filter(|&i| self.clips[i].entry.split == split)
            .collect()
    }

    pub fn geometry(&self, data: &DataConfig, input: usize) -> Result<Geometry> {
        Geometry::new(self.manifest.width, self.manifest.height, data.resize_height, input)
    }

    /// Builds the network sample of clip `index`: frames at `frame_ids`
    /// under `aug`, maps of side `map_side` (0 = none).
    pub fn sample(
        &self,
        index: usize,
        frame_ids: &[usize],
        geom: &Geometry,
        aug: &Augmentation,
        map_side: usize,
        flip_labels: &[usize],
    ) -> Result<Sample> {
        let clip = &self.clips[index];
        let (w, h) = (self.manifest.width, self.manifest.height);
        let crop = geom.crop(aug);
        let mut frames = Vec::with_capacity(frame_ids.len() * 3 * geom.out * geom.out);
        let mut maps = Vec::with_capacity(frame_ids.len() * map_side * map_side);
        for &t in frame_ids {
            frames.extend(preprocess(&clip.frames[t * 3 * w * h..(t + 1) * 3 * w * h], geom, &crop)?);
            if map_side > 0 {
                let motion = clip.motion.as_ref().ok_or_else(|| {
                    CoreError::Data(format!("{}: no motion masks", clip.entry.clip_id))
                })?;
                maps.extend(crop_map(&motion[t * w * h..(t + 1) * w * h], geom, &crop, map_side));
            }
        }
        let label = if aug.flip {
            flip_labels[clip.entry.label]
        } else {
            clip.entry.label
        };
        Ok(Sample {
            frames,
            maps,
            label,
            size: geom.out,
            map_side,
        })
    }

    /// Test-view sample: centred segment frames, centre crop, no flip.
    pub fn test_sample(&self, index: usize, n: usize, geom: &Geometry, map_side: usize) -> Result<Sample> {
        let ids = test_frames(self.clips[index].entry.t, n)?;
        self.sample(index, &ids, geom, &Augmentation::IDENTITY, map_side, &self.manifest.flip_labels())
    }
}

/// Draws the per-sample training view: segment frame indices, then the
/// augmentation (or the identity view when augmentation is off).
pub fn draw_train_view<R: Rng + ?Sized>(
    t: usize,
    n: usize,
    augment: bool,
    rng: &mut R,
) -> Result<(Vec<usize>, Augmentation)> {
    let ids = sample_frames(t, n, Mode::Train, rng)?;
    let aug = if augment {
        crate::preprocess::augment(Split::Train, rng)?
    } else {
        Augmentation::IDENTITY
    };
    Ok((ids, aug))
}
