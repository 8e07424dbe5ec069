//! Single-stream action model: a strided conv backbone with three taps, a
//! ConvLSTM over the per-frame T5 features, a pooled linear classifier, the
//! motion-segmentation (MS) side head, optional CAM attention and the
//! verb/noun multitask heads.
//!
//! Parameters live in a [`ParamStore`] keyed `<block>.<layer>.<param>`; the
//! block prefix selects the learning rate and the RNG init stream.

use std::collections::BTreeMap;

use egoms_tensor::rng::stream;
use egoms_tensor::{init_param, InitScheme, Pool, Real, Tape, Tensor, Var};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tap {
    T3,
    T4,
    T5,
}

impl Tap {
    /// Backbone stage whose output this tap exposes (stem is stage 0).
    fn stage(self) -> usize {
        match self {
            Tap::T3 => 1,
            Tap::T4 => 2,
            Tap::T5 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsFinal {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Block {
    Backbone,
    ConvLstm,
    Classifier,
    MsHead,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Backbone, Block::ConvLstm, Block::Classifier, Block::MsHead];

    pub fn prefix(self) -> &'static str {
        match self {
            Block::Backbone => "backbone",
            Block::ConvLstm => "convlstm",
            Block::Classifier => "classifier",
            Block::MsHead => "ms_head",
        }
    }

    pub fn of(name: &str) -> Option<Block> {
        let prefix = name.split('.').next()?;
        Block::ALL.into_iter().find(|b| b.prefix() == prefix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_size: usize,
    /// Output channels of stem, T3, T4 and T5.
    pub stage_channels: [usize; 4],
    pub hidden: usize,
    pub ms_on: bool,
    pub tap: Tap,
    pub ms_reduce: usize,
    pub ms_final: MsFinal,
    pub cam_on: bool,
    pub freeze_lower: bool,
    pub multitask: bool,
    pub verbs: usize,
    pub nouns: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            stage_channels: [16, 32, 64, 128],
            hidden: 64,
            ms_on: true,
            tap: Tap::T5,
            ms_reduce: 32,
            ms_final: MsFinal::Softmax,
            cam_on: false,
            freeze_lower: false,
            multitask: false,
            verbs: 3,
            nouns: 2,
        }
    }
}

const STAGES: [&str; 4] = ["stem", "t3", "t4", "t5"];

/// Spatial size after one 3×3, stride-2, pad-1 convolution.
fn halve(n: usize) -> usize {
    (n - 1) / 2 + 1
}

impl ModelConfig {
    pub fn num_classes(&self) -> usize {
        self.verbs * self.nouns
    }

    /// Spatial extent of the output of backbone stage `stage` (stem = 0).
    pub fn stage_extent(&self, stage: usize) -> usize {
        (0..=stage).fold(self.input_size, |n, _| halve(n))
    }

    pub fn tap_extent(&self, tap: Tap) -> usize {
        self.stage_extent(tap.stage())
    }

    /// Side `s` of the motion map predicted by the MS head.
    pub fn map_side(&self) -> usize {
        self.tap_extent(self.tap)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        // 8 is admitted for the tiny gradient-check model (T5 is then 1×1).
        if self.input_size == 0 || (self.input_size % 16 != 0 && self.input_size != 8) {
            return bad("model.input_size must be divisible by 16");
        }
        if self.stage_channels.iter().any(|&c| c == 0) || self.hidden == 0 {
            return bad("model channel counts must be positive");
        }
        if self.ms_on && self.ms_reduce == 0 {
            return bad("model.ms_reduce must be positive");
        }
        if self.verbs == 0 || self.nouns == 0 || self.num_classes() < 2 {
            return bad("model needs at least two classes");
        }
        Ok(())
    }
}

/// Named parameters, ordered by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn block_scalars(&self, block: Block) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| Block::of(n) == Some(block))
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

fn draw<T: Real>(
    store: &mut ParamStore<T>,
    rng: &mut egoms_tensor::rng::StreamRng,
    name: &str,
    shape: &[usize],
    scheme: InitScheme,
) -> Result<()> {
    store.insert(name, init_param(shape, scheme, rng)?);
    Ok(())
}

/// Fresh parameters; each block draws from its own `init.<block>` stream so
/// toggling one block never changes another block's values.
pub fn init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = ParamStore::default();
    let c = cfg.stage_channels;

    let mut rng = stream(seed, "init.backbone");
    let mut in_c = 3;
    for (stage, &out_c) in STAGES.iter().zip(&c) {
        draw(&mut store, &mut rng, &format!("backbone.{stage}.weight"), &[out_c, in_c, 3, 3], InitScheme::Kaiming)?;
        draw(&mut store, &mut rng, &format!("backbone.{stage}.bias"), &[out_c], InitScheme::Zeros)?;
        in_c = out_c;
    }

    let mut rng = stream(seed, "init.convlstm");
    let h = cfg.hidden;
    draw(&mut store, &mut rng, "convlstm.gates.weight", &[4 * h, c[3] + h, 3, 3], InitScheme::Xavier)?;
    // Gate order i, f, o, g; the forget gate starts open.
    let bias = Tensor::from_fn(&[4 * h], |i| if (h..2 * h).contains(&i) { T::one() } else { T::zero() })?;
    store.insert("convlstm.gates.bias", bias);

    let mut rng = stream(seed, "init.classifier");
    if cfg.multitask {
        draw(&mut store, &mut rng, "classifier.verb.weight", &[h, cfg.verbs], InitScheme::Xavier)?;
        draw(&mut store, &mut rng, "classifier.verb.bias", &[cfg.verbs], InitScheme::Zeros)?;
        draw(&mut store, &mut rng, "classifier.noun.weight", &[h, cfg.nouns], InitScheme::Xavier)?;
        draw(&mut store, &mut rng, "classifier.noun.bias", &[cfg.nouns], InitScheme::Zeros)?;
    } else {
        draw(&mut store, &mut rng, "classifier.fc.weight", &[h, cfg.num_classes()], InitScheme::Xavier)?;
        draw(&mut store, &mut rng, "classifier.fc.bias", &[cfg.num_classes()], InitScheme::Zeros)?;
    }

    if cfg.cam_on {
        // Auxiliary per-frame classifier stored as a 1×1 conv so the same
        // weights give both the pooled logits and the class activation maps.
        let mut rng = stream(seed, "init.cam");
        draw(&mut store, &mut rng, "classifier.cam.weight", &[cfg.num_classes(), c[3], 1, 1], InitScheme::Xavier)?;
        draw(&mut store, &mut rng, "classifier.cam.bias", &[cfg.num_classes()], InitScheme::Zeros)?;
    }

    if cfg.ms_on {
        let mut rng = stream(seed, "init.ms_head");
        let tc = c[cfg.tap.stage()];
        let s = cfg.map_side();
        draw(&mut store, &mut rng, "ms_head.conv.weight", &[cfg.ms_reduce, tc, 3, 3], InitScheme::Kaiming)?;
        draw(&mut store, &mut rng, "ms_head.conv.bias", &[cfg.ms_reduce], InitScheme::Zeros)?;
        draw(&mut store, &mut rng, "ms_head.fc.weight", &[cfg.ms_reduce * s * s, s * s], InitScheme::Xavier)?;
        draw(&mut store, &mut rng, "ms_head.fc.bias", &[s * s], InitScheme::Zeros)?;
    }
    Ok(store)
}

/// True for parameters below T5 (stem, T3, T4).
pub fn is_lower(name: &str) -> bool {
    ["backbone.stem.", "backbone.t3.", "backbone.t4."]
        .iter()
        .any(|p| name.starts_with(p))
}

/// Parameters placed on a tape, by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Puts every parameter on the tape. With `freeze_lower`, stem/T3/T4 are
    /// bound as constants so no gradient reaches them.
    pub fn new<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, freeze_lower: bool) -> Self {
        let vars = store
            .iter()
            .map(|(name, value)| {
                let v = if freeze_lower && is_lower(name) {
                    tape.constant(value.clone())
                } else {
                    tape.param(value.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Self { vars }
    }

    /// Binds every parameter as a constant, for inference.
    pub fn constants<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>) -> Self {
        let vars = store
            .iter()
            .map(|(name, value)| (name.clone(), tape.constant(value.clone())))
            .collect();
        Self { vars }
    }

    /// Wraps variables already on a tape, e.g. the inputs of a gradient check.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::Config(format!("missing parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    /// Gradient of every bound parameter after `backward`; frozen or
    /// unreached parameters report exact zeros.
    pub fn grads<T: Real>(&self, tape: &Tape<T>) -> Result<BTreeMap<String, Tensor<T>>> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = match tape.grad(v) {
                    Some(g) => g,
                    None => Tensor::zeros(tape.shape(v))?,
                };
                Ok((name.clone(), g))
            })
            .collect()
    }
}

/// Per-frame backbone features at the three taps, frames batched as `B·N`.
#[derive(Debug, Clone, Copy)]
pub struct Taps {
    pub t3: Var,
    pub t4: Var,
    pub t5: Var,
}

impl Taps {
    pub fn get(&self, tap: Tap) -> Var {
        match tap {
            Tap::T3 => self.t3,
            Tap::T4 => self.t4,
            Tap::T5 => self.t5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Logits {
    /// `[B, C]`.
    Classes(Var),
    /// `[B, V]` and `[B, Nn]`.
    VerbNoun { verb: Var, noun: Var },
}

#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    pub logits: Logits,
    /// MS head probabilities `[B, N, s²]` when the head is on.
    pub motion: Option<Var>,
    /// CAM attention `[B·N, 1, s, s]` when CAM is on.
    pub attention: Option<Var>,
    pub taps: Taps,
}

/// Runs the stem and the three stages on frames `[B·N, 3, S, S]`.
pub fn backbone_forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    frames: Var,
) -> Result<Taps> {
    let shape = tape.shape(frames).to_vec();
    if shape.len() != 4 || shape[1] != 3 || shape[2] != cfg.input_size || shape[3] != cfg.input_size {
        return Err(CoreError::Tensor(egoms_tensor::TensorError::ShapeMismatch {
            op: "backbone",
            detail: format!("expected [*, 3, {0}, {0}], got {shape:?}", cfg.input_size),
        }));
    }
    // Centre pixel values on zero; without normalization layers an
    // all-positive input makes every first-layer unit share a common offset.
    let offset = tape.constant(Tensor::full(&shape, T::of(-0.5))?);
    let mut x = tape.add(frames, offset)?;
    let mut outs = [x; 4];
    for (i, stage) in STAGES.iter().enumerate() {
        let w = bound.var(&format!("backbone.{stage}.weight"))?;
        let b = bound.var(&format!("backbone.{stage}.bias"))?;
        let y = tape.conv2d(x, w, Some(b), 2, 1)?;
        x = tape.relu(y)?;
        outs[i] = x;
    }
    Ok(Taps {
        t3: outs[1],
        t4: outs[2],
        t5: outs[3],
    })
}

/// ConvLSTM state `(h, c)`, each `[B, Ch, s, s]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

pub fn zero_state<T: Real>(tape: &mut Tape<T>, batch: usize, hidden: usize, s: usize) -> Result<LstmState> {
    let h = tape.constant(Tensor::zeros(&[batch, hidden, s, s])?);
    let c = tape.constant(Tensor::zeros(&[batch, hidden, s, s])?);
    Ok(LstmState { h, c })
}

/// One ConvLSTM step: `i,f,o,g = σ,σ,σ,tanh(conv([x,h]))`,
/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn convlstm_step<T: Real>(
    tape: &mut Tape<T>,
    weight: Var,
    bias: Var,
    x: Var,
    state: LstmState,
) -> Result<LstmState> {
    let hidden = tape.shape(state.h)[1];
    let xh = tape.concat(&[x, state.h], 1)?;
    let gates = tape.conv2d(xh, weight, Some(bias), 1, 1)?;
    let gate = |tape: &mut Tape<T>, k: usize| tape.slice(gates, 1, k * hidden, hidden);
    let (i, f, o, g) = (gate(tape, 0)?, gate(tape, 1)?, gate(tape, 2)?, gate(tape, 3)?);
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let o = tape.sigmoid(o)?;
    let g = tape.tanh(g)?;
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Spatial softmax over the CAM of each frame's argmax class (ties to the
/// lowest index), returned as `[B·N, 1, s, s]`.
pub fn cam_attention<T: Real>(tape: &mut Tape<T>, bound: &Bound, features: Var) -> Result<Var> {
    let w = bound
        .var("classifier.cam.weight")
        .map_err(|_| CoreError::Config("cam_on needs classifier.cam weights".into()))?;
    let b = bound.var("classifier.cam.bias")?;
    let shape = tape.shape(features).to_vec();
    let (frames, s_h, s_w) = (shape[0], shape[2], shape[3]);
    let pooled = tape.avg_pool2d(features, Pool::Global)?;
    let aux = tape.conv2d(pooled, w, Some(b), 1, 0)?;
    let classes = tape.shape(aux)[1];
    let scores = tape.value(aux).data();
    let top: Vec<usize> = (0..frames)
        .map(|r| argmax(&scores[r * classes..(r + 1) * classes]))
        .collect();
    let cams = tape.conv2d(features, w, None, 1, 0)?;
    let cam = tape.select_channel(cams, &top)?;
    let flat = tape.reshape(cam, &[frames, s_h * s_w])?;
    let attn = tape.softmax(flat)?;
    Ok(tape.reshape(attn, &[frames, 1, s_h, s_w])?)
}

/// MS head on tap features `[B·N, C, s, s]`: conv 3×3 + relu, flatten,
/// linear to `s²`, final nonlinearity. Returns `[B, N, s²]`.
pub fn ms_head_forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    features: Var,
    batch: usize,
    frames: usize,
) -> Result<Var> {
    let s = cfg.map_side();
    let shape = tape.shape(features).to_vec();
    if shape.len() != 4 || shape[2] != s || shape[3] != s {
        return Err(CoreError::Config(format!(
            "MS head configured for a {s}x{s} tap, got features {shape:?}"
        )));
    }
    let w = bound.var("ms_head.conv.weight")?;
    let b = bound.var("ms_head.conv.bias")?;
    let y = tape.conv2d(features, w, Some(b), 1, 1)?;
    let y = tape.relu(y)?;
    let y = tape.flatten(y)?;
    let fw = bound.var("ms_head.fc.weight")?;
    let fb = bound.var("ms_head.fc.bias")?;
    let z = tape.linear(y, fw, Some(fb))?;
    let p = match cfg.ms_final {
        MsFinal::Softmax => tape.softmax(z)?,
        MsFinal::Sigmoid => tape.sigmoid(z)?,
    };
    Ok(tape.reshape(p, &[batch, frames, s * s])?)
}

/// Full forward pass on frames `[B·N, 3, S, S]` ordered sample-major.
pub fn model_forward<T: Real>(
    tape: &mut Tape<T>,
    cfg: &ModelConfig,
    bound: &Bound,
    frames: Var,
    batch: usize,
    n_frames: usize,
) -> Result<ModelOutput> {
    if tape.shape(frames)[0] != batch * n_frames {
        return Err(CoreError::Contract(format!(
            "frame batch {} is not B·N = {}",
            tape.shape(frames)[0],
            batch * n_frames
        )));
    }
    let taps = backbone_forward(tape, cfg, bound, frames)?;

    let mut seq = taps.t5;
    let mut attention = None;
    if cfg.cam_on {
        let attn = cam_attention(tape, bound, taps.t5)?;
        seq = tape.channel_mul(taps.t5, attn)?;
        attention = Some(attn);
    }

    let s5 = cfg.tap_extent(Tap::T5);
    let w = bound.var("convlstm.gates.weight")?;
    let b = bound.var("convlstm.gates.bias")?;
    let mut state = zero_state(tape, batch, cfg.hidden, s5)?;
    for k in 0..n_frames {
        let rows: Vec<usize> = (0..batch).map(|i| i * n_frames + k).collect();
        let x = tape.select_rows(seq, &rows)?;
        state = convlstm_step(tape, w, b, x, state)?;
    }
    let pooled = tape.avg_pool2d(state.h, Pool::Global)?;
    let feat = tape.flatten(pooled)?;
    let head = |tape: &mut Tape<T>, name: &str| -> Result<Var> {
        let w = bound.var(&format!("classifier.{name}.weight"))?;
        let b = bound.var(&format!("classifier.{name}.bias"))?;
        Ok(tape.linear(feat, w, Some(b))?)
    };
    let logits = if cfg.multitask {
        Logits::VerbNoun {
            verb: head(tape, "verb")?,
            noun: head(tape, "noun")?,
        }
    } else {
        Logits::Classes(head(tape, "fc")?)
    };

    let motion = if cfg.ms_on {
        Some(ms_head_forward(tape, cfg, bound, taps.get(cfg.tap), batch, n_frames)?)
    } else {
        None
    };
    Ok(ModelOutput {
        logits,
        motion,
        attention,
        taps,
    })
}

/// Index of the largest value, ties to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_f64(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// `p(v, n) = softmax(verb)[v] · softmax(noun)[n]` as a row-major `V×Nn`
/// grid, with the argmax `(v, n)` (ties to lowest verb, then noun).
pub fn multitask_action_prob(verb_logits: &[f64], noun_logits: &[f64]) -> (Vec<f64>, (usize, usize)) {
    let pv = softmax_f64(verb_logits);
    let pn = softmax_f64(noun_logits);
    let grid: Vec<f64> = pv.iter().flat_map(|&a| pn.iter().map(move |&b| a * b)).collect();
    let best = argmax(&grid);
    (grid, (best / pn.len(), best % pn.len()))
}

/// Per-class scores of each sample, `[B][C]`: logits for a single head,
/// action probabilities for verb/noun heads.
pub fn class_scores<T: Real>(tape: &Tape<T>, logits: Logits) -> Vec<Vec<f64>> {
    match logits {
        Logits::Classes(v) => {
            let c = tape.shape(v)[1];
            tape.value(v)
                .data()
                .chunks(c)
                .map(|r| r.iter().map(|x| x.as_f64()).collect())
                .collect()
        }
        Logits::VerbNoun { verb, noun } => {
            let (nv, nn) = (tape.shape(verb)[1], tape.shape(noun)[1]);
            let vd = tape.value(verb).data();
            let nd = tape.value(noun).data();
            (0..tape.shape(verb)[0])
                .map(|b| {
                    let v: Vec<f64> = vd[b * nv..(b + 1) * nv].iter().map(|x| x.as_f64()).collect();
                    let n: Vec<f64> = nd[b * nn..(b + 1) * nn].iter().map(|x| x.as_f64()).collect();
                    multitask_action_prob(&v, &n).0
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use egoms_tensor::rng::stream;
    use rand::Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_size: 16,
            stage_channels: [2, 3, 4, 5],
            hidden: 3,
            ms_reduce: 2,
            verbs: 2,
            nouns: 1,
            ..ModelConfig::default()
        }
    }

    fn frames(cfg: &ModelConfig, n: usize, seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, "test.frames");
        Tensor::from_fn(&[n, 3, cfg.input_size, cfg.input_size], |_| rng.gen::<f64>()).unwrap()
    }

    #[test]
    fn default_taps_have_documented_shapes() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.tap_extent(Tap::T3), 16);
        assert_eq!(cfg.tap_extent(Tap::T4), 8);
        assert_eq!(cfg.tap_extent(Tap::T5), 4);
        assert_eq!(cfg.map_side(), 4);
    }

    #[test]
    fn block_prefixes_cover_every_parameter() {
        let cfg = ModelConfig {
            cam_on: true,
            ..tiny()
        };
        let store: ParamStore<f32> = init_params(&cfg, 1).unwrap();
        for name in store.names() {
            assert!(Block::of(&name).is_some(), "{name}");
            assert_eq!(name.split('.').count(), 3, "{name}");
        }
    }

    #[test]
    fn toggling_heads_keeps_shared_parameters() {
        let base = ModelConfig {
            ms_on: false,
            ..tiny()
        };
        let a: ParamStore<f32> = init_params(&base, 9).unwrap();
        let b: ParamStore<f32> = init_params(&ModelConfig { cam_on: true, ..tiny() }, 9).unwrap();
        for (name, value) in a.iter() {
            assert_eq!(b.get(name), Some(value), "{name}");
        }
        assert_eq!(b.len(), a.len() + 6);
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let cfg = tiny();
        let store: ParamStore<f32> = init_params(&cfg, 1).unwrap();
        let b = store.get("convlstm.gates.bias").unwrap().data();
        let h = cfg.hidden;
        assert!(b[..h].iter().all(|&x| x == 0.0));
        assert!(b[h..2 * h].iter().all(|&x| x == 1.0));
        assert!(b[2 * h..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn batch_permutation_permutes_taps() {
        let cfg = tiny();
        let store: ParamStore<f64> = init_params(&cfg, 3).unwrap();
        let x = frames(&cfg, 2, 4);
        let plane = x.numel() / 2;
        let mut swapped = x.data()[plane..].to_vec();
        swapped.extend_from_slice(&x.data()[..plane]);
        let swapped = Tensor::new(x.shape(), swapped).unwrap();
        let run = |input: Tensor<f64>| {
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &store, false);
            let v = tape.constant(input);
            let taps = backbone_forward(&mut tape, &cfg, &bound, v).unwrap();
            tape.value(taps.t5).clone()
        };
        let a = run(x);
        let b = run(swapped);
        let half = a.numel() / 2;
        assert_eq!(&a.data()[..half], &b.data()[half..]);
        assert_eq!(&a.data()[half..], &b.data()[..half]);
    }

    #[test]
    fn wrong_frame_size_is_a_shape_error() {
        let cfg = tiny();
        let store: ParamStore<f64> = init_params(&cfg, 3).unwrap();
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, &store, false);
        let v = tape.constant(Tensor::zeros(&[1, 3, 8, 8]).unwrap());
        assert!(backbone_forward(&mut tape, &cfg, &bound, v).is_err());
    }
}
