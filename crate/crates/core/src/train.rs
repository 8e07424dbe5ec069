//! Epoch loop, evaluation and the multi-seed experiment protocol.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use egoms_tensor::rng::{cursor, stream, StreamRng};
use egoms_tensor::{Tape, Tensor, TensorError, Var};
use rand::seq::SliceRandom;

use crate::checkpoint;
use crate::config::Config;
use crate::dataset::{draw_train_view, Dataset};
use crate::error::{CoreError, Result};
use crate::losses::{loss_combined, loss_logits, loss_ms};
use crate::model::{argmax, class_scores, init_params, model_forward, Block, Bound, ModelConfig, MsFinal, ParamStore};
use crate::optim::{Adam, AdamParams};
use crate::preprocess::{Geometry, Sample, Split};

pub const METRICS_HEADER: &str = "run_id,seed,epoch,split,loss_c,loss_ms,loss_total,top1,top5,epoch_train_s,eval_s";
pub const SUMMARY_HEADER: &str =
    "variant,acc_mean,acc_std,top5_mean,test_time_s_mean,train_time_per_epoch_s_mean,train_top1_mean,ms_iou_mean,params,failed_runs";

/// Wall-clock seconds spent in `f`, with its result.
pub fn measure_timing<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_c: f64,
    /// `ms_weight · L_ms`, the MS term as it enters the total.
    pub loss_ms: f64,
    pub loss_total: f64,
    pub top1: f64,
    pub top5: f64,
    /// Forward, backward and optimizer time; data preparation excluded.
    pub train_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub top1: f64,
    pub top5: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub predictions: Vec<usize>,
}

/// Rank of `label` among `scores` (0 = best); ties rank the lower index first.
fn rank(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > s || (x == s && j < label))
        .count()
}

/// Top-1/top-5 and per-class precision/recall of per-sample class scores.
/// With fewer than five classes top-5 is 1 by construction; 0/0 precision
/// or recall is 0.
pub fn score_metrics(scores: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<Metrics> {
    if scores.is_empty() {
        return Err(CoreError::Contract("cannot evaluate an empty split".into()));
    }
    if scores.len() != labels.len() {
        return Err(CoreError::Contract(format!("{} score rows for {} labels", scores.len(), labels.len())));
    }
    let n = labels.len() as f64;
    let predictions: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let top1 = predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / n;
    let top5 = scores.iter().zip(labels).filter(|(s, &l)| rank(s, l) < 5).count() as f64 / n;
    let mut tp = vec![0usize; classes];
    let mut predicted = vec![0usize; classes];
    let mut actual = vec![0usize; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        predicted[p] += 1;
        actual[l] += 1;
        if p == l {
            tp[p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Metrics {
        top1,
        top5,
        precision: (0..classes).map(|c| ratio(tp[c], predicted[c])).collect(),
        recall: (0..classes).map(|c| ratio(tp[c], actual[c])).collect(),
        predictions,
    })
}

/// `Σ min(a, b) / Σ max(a, b)`; two all-zero maps score 1.
pub fn soft_iou(a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        num += x.min(y);
        den += x.max(y);
    }
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub loss_c: f64,
    pub loss_ms: f64,
    pub loss_total: f64,
    pub metrics: Metrics,
    /// Mean soft IoU between predicted and GT maps over frames whose GT map
    /// is non-empty. The softmax head is compared against the GT map
    /// normalized to unit sum.
    pub ms_iou: Option<f64>,
    pub eval_s: f64,
}

struct Batch {
    frames: Tensor<f32>,
    maps: Option<Tensor<f32>>,
    labels: Vec<usize>,
}

fn stack(samples: &[Sample], n: usize, with_maps: bool) -> Result<Batch> {
    let b = samples.len();
    let size = samples[0].size;
    let frames = Tensor::new(&[b * n, 3, size, size], samples.iter().flat_map(|s| s.frames.iter().copied()).collect())?;
    let maps = if with_maps {
        let side = samples[0].map_side;
        Some(Tensor::new(&[b, n, side * side], samples.iter().flat_map(|s| s.maps.iter().copied()).collect())?)
    } else {
        None
    };
    Ok(Batch {
        frames,
        maps,
        labels: samples.iter().map(|s| s.label).collect(),
    })
}

/// Loss values and outputs of one forward pass.
struct Pass {
    loss: Var,
    loss_c: f64,
    loss_ms: f64,
    scores: Vec<Vec<f64>>,
    motion: Option<Var>,
}

fn non_finite(epoch: usize, batch: usize, term: &'static str) -> impl Fn(CoreError) -> CoreError {
    move |e| match e {
        CoreError::Tensor(TensorError::NonFinite { .. }) => CoreError::NonFiniteLoss { epoch, batch, term },
        other => other,
    }
}

fn forward_pass(
    tape: &mut Tape<f32>,
    model: &ModelConfig,
    bound: &Bound,
    batch: &Batch,
    n: usize,
    ms_weight: f64,
    at: (usize, usize),
) -> Result<Pass> {
    let b = batch.labels.len();
    let frames = tape.constant(batch.frames.clone());
    let out = model_forward(tape, model, bound, frames, b, n).map_err(non_finite(at.0, at.1, "forward"))?;
    let lc = loss_logits(tape, out.logits, &batch.labels).map_err(non_finite(at.0, at.1, "loss_c"))?;
    let lms = match (out.motion, &batch.maps) {
        (Some(p), Some(m)) => Some(loss_ms(tape, p, m, model.ms_final).map_err(non_finite(at.0, at.1, "loss_ms"))?),
        _ => None,
    };
    let loss = loss_combined(tape, lc, lms, ms_weight).map_err(non_finite(at.0, at.1, "loss_total"))?;
    let value = |v: Var| tape.value(v).data()[0] as f64;
    let loss_c = value(lc);
    let loss_ms = lms.map_or(0.0, |v| ms_weight * value(v));
    for (term, x) in [("loss_c", loss_c), ("loss_ms", loss_ms)] {
        if !x.is_finite() {
            return Err(CoreError::NonFiniteLoss {
                epoch: at.0,
                batch: at.1,
                term,
            });
        }
    }
    Ok(Pass {
        loss,
        loss_c,
        loss_ms,
        scores: class_scores(tape, out.logits),
        motion: out.motion,
    })
}

/// One model being trained on one seed.
pub struct Trainer<'a> {
    pub config: Config,
    pub model: ModelConfig,
    pub params: ParamStore<f32>,
    pub seed: u64,
    data: &'a Dataset,
    geom: Geometry,
    map_side: usize,
    flip_labels: Vec<usize>,
    adam: Adam,
    data_rng: StreamRng,
    aug_rng: StreamRng,
    epochs_done: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &Config, data: &'a Dataset, seed: u64) -> Result<Self> {
        config.validate()?;
        let model = config.model_config();
        if data.manifest.verbs != config.data.verbs || data.manifest.nouns != config.data.nouns {
            return Err(CoreError::Config(
                "dataset verbs/nouns differ from data.verbs/data.nouns".into(),
            ));
        }
        let n = config.train.n_frames;
        if let Some(c) = data.clips.iter().find(|c| c.entry.t < n) {
            return Err(CoreError::Config(format!("{} has fewer than {n} frames", c.entry.clip_id)));
        }
        let geom = data.geometry(&config.data, model.input_size)?;
        let map_side = if model.ms_on { model.map_side() } else { 0 };
        if model.ms_on && data.clips.iter().any(|c| c.motion.is_none()) {
            return Err(CoreError::Data("MS head needs motion masks; run gen-motion-maps first".into()));
        }
        let t = &config.train;
        Ok(Self {
            params: init_params(&model, seed)?,
            adam: Adam::new(AdamParams {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
                weight_decay: t.weight_decay,
            }),
            data_rng: stream(seed, "data"),
            aug_rng: stream(seed, "augment"),
            config: config.clone(),
            model,
            seed,
            data,
            geom,
            map_side,
            flip_labels: data.manifest.flip_labels(),
            epochs_done: 0,
        })
    }

    fn lr(&self, name: &str) -> f64 {
        let t = &self.config.train;
        if self.model.freeze_lower && crate::model::is_lower(name) {
            return 0.0;
        }
        match Block::of(name) {
            Some(Block::Backbone) => t.lr_backbone,
            Some(Block::ConvLstm) => t.lr_convlstm,
            Some(Block::Classifier) => t.lr_classifier,
            Some(Block::MsHead) => t.lr_ms_head,
            None => 0.0,
        }
    }

    /// Cursors of the data and augmentation streams, for checkpoints.
    pub fn rng_cursors(&self) -> Vec<(&'static str, u128)> {
        vec![("data", cursor(&self.data_rng)), ("augment", cursor(&self.aug_rng))]
    }

    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epochs_done + 1;
        let n = self.config.train.n_frames;
        let bs = self.config.train.batch_size;
        let mut order = self.data.indices(Split::Train);
        if order.is_empty() {
            return Err(CoreError::Contract("the train split is empty".into()));
        }
        order.shuffle(&mut self.data_rng);
        let (mut sum_c, mut sum_ms, mut sum_total) = (0.0, 0.0, 0.0);
        let mut scores = Vec::with_capacity(order.len());
        let mut labels = Vec::with_capacity(order.len());
        let mut seconds = 0.0;
        for (bi, chunk) in order.chunks(bs).enumerate() {
            let mut samples = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (ids, aug) = draw_train_view(self.data.clips[i].entry.t, n, self.config.train.augment, &mut self.aug_rng)?;
                samples.push(self.data.sample(i, &ids, &self.geom, &aug, self.map_side, &self.flip_labels)?);
            }
            let batch = stack(&samples, n, self.map_side > 0)?;
            let start = Instant::now();
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &self.params, self.model.freeze_lower);
            let pass = forward_pass(&mut tape, &self.model, &bound, &batch, n, self.config.train.ms_weight, (epoch, bi))?;
            tape.backward(pass.loss).map_err(|e| non_finite(epoch, bi, "backward")(e.into()))?;
            let grads = bound.grads(&tape)?;
            drop(tape);
            let lrs: Vec<(String, f64)> = self.params.names().into_iter().map(|k| {
                let lr = self.lr(&k);
                (k, lr)
            }).collect();
            self.adam.step(&mut self.params, &grads, |name| {
                lrs.iter().find(|(k, _)| k == name).map_or(0.0, |(_, lr)| *lr)
            })?;
            seconds += start.elapsed().as_secs_f64();
            let b = batch.labels.len() as f64;
            sum_c += pass.loss_c * b;
            sum_ms += pass.loss_ms * b;
            sum_total += (pass.loss_c + pass.loss_ms) * b;
            scores.extend(pass.scores);
            labels.extend(batch.labels);
        }
        let m = score_metrics(&scores, &labels, self.model.num_classes())?;
        let count = labels.len() as f64;
        self.epochs_done = epoch;
        Ok(EpochStats {
            epoch,
            loss_c: sum_c / count,
            loss_ms: sum_ms / count,
            loss_total: sum_total / count,
            top1: m.top1,
            top5: m.top5,
            train_s: seconds,
        })
    }

    pub fn evaluate(&self, split: Split) -> Result<EvalResult> {
        evaluate(&self.config, &self.model, &self.params, self.data, split)
    }
}

/// Evaluates `params` on `split` with test-view preprocessing.
pub fn evaluate(
    config: &Config,
    model: &ModelConfig,
    params: &ParamStore<f32>,
    data: &Dataset,
    split: Split,
) -> Result<EvalResult> {
    let indices = data.indices(split);
    if indices.is_empty() {
        return Err(CoreError::Contract(format!("cannot evaluate an empty {split:?} split")));
    }
    let n = config.train.n_frames;
    let geom = data.geometry(&config.data, model.input_size)?;
    let map_side = if model.ms_on && data.clips.iter().all(|c| c.motion.is_some()) {
        model.map_side()
    } else {
        0
    };
    let ms_weight = config.train.ms_weight;
    let start = Instant::now();
    let (mut sum_c, mut sum_ms) = (0.0, 0.0);
    let mut scores = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    let (mut iou_sum, mut iou_count) = (0.0, 0usize);
    for chunk in indices.chunks(config.train.batch_size) {
        let samples: Vec<Sample> = chunk
            .iter()
            .map(|&i| data.test_sample(i, n, &geom, map_side))
            .collect::<Result<_>>()?;
        let batch = stack(&samples, n, map_side > 0)?;
        let mut tape = Tape::new();
        let bound = Bound::constants(&mut tape, params);
        let pass = forward_pass(&mut tape, model, &bound, &batch, n, ms_weight, (0, 0))?;
        let b = batch.labels.len() as f64;
        sum_c += pass.loss_c * b;
        sum_ms += pass.loss_ms * b;
        if let (Some(p), Some(maps)) = (pass.motion, &batch.maps) {
            let cells = map_side * map_side;
            let probs = tape.value(p).data();
            for (l, m) in probs.chunks(cells).zip(maps.data().chunks(cells)) {
                let total: f64 = m.iter().map(|&x| x as f64).sum();
                if total <= 0.0 {
                    continue;
                }
                let target: Vec<f64> = match model.ms_final {
                    MsFinal::Softmax => m.iter().map(|&x| x as f64 / total).collect(),
                    MsFinal::Sigmoid => m.iter().map(|&x| x as f64).collect(),
                };
                let pred: Vec<f64> = l.iter().map(|&x| x as f64).collect();
                iou_sum += soft_iou(&pred, &target);
                iou_count += 1;
            }
        }
        scores.extend(pass.scores);
        labels.extend(batch.labels);
    }
    let metrics = score_metrics(&scores, &labels, model.num_classes())?;
    let count = labels.len() as f64;
    Ok(EvalResult {
        loss_c: sum_c / count,
        loss_ms: sum_ms / count,
        loss_total: (sum_c + sum_ms) / count,
        metrics,
        ms_iou: (iou_count > 0).then(|| iou_sum / iou_count as f64),
        eval_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub test: EvalResult,
    /// Top-1 of the final model on the train split, test-view preprocessing.
    pub train_top1: f64,
    pub params: usize,
    /// Final parameter values.
    pub weights: ParamStore<f32>,
}

impl RunOutcome {
    pub fn mean_epoch_s(&self) -> f64 {
        self.epochs.iter().map(|e| e.train_s).sum::<f64>() / self.epochs.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub variant: String,
    pub runs: Vec<RunOutcome>,
    /// Seeds whose run failed, with the error.
    pub failures: Vec<(u64, String)>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub variant: String,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub top5_mean: f64,
    pub test_time_s_mean: f64,
    pub train_time_per_epoch_s_mean: f64,
    /// Final model's top-1 on the un-augmented train split, averaged over runs.
    pub train_top1_mean: f64,
    pub ms_iou_mean: Option<f64>,
    pub params: usize,
    pub failed_runs: usize,
}

impl Experiment {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn summary(&self) -> Summary {
        let col = |f: &dyn Fn(&RunOutcome) -> f64| -> Vec<f64> { self.runs.iter().map(f).collect() };
        let (acc_mean, acc_std) = mean_std(&col(&|r| r.test.metrics.top1));
        let ious: Vec<f64> = self.runs.iter().filter_map(|r| r.test.ms_iou).collect();
        Summary {
            variant: self.variant.clone(),
            acc_mean,
            acc_std,
            top5_mean: mean_std(&col(&|r| r.test.metrics.top5)).0,
            test_time_s_mean: mean_std(&col(&|r| r.test.eval_s)).0,
            train_time_per_epoch_s_mean: mean_std(&col(&|r| r.mean_epoch_s())).0,
            train_top1_mean: mean_std(&col(&|r| r.train_top1)).0,
            ms_iou_mean: (!ious.is_empty()).then(|| mean_std(&ious).0),
            params: self.runs.first().map_or(0, |r| r.params),
            failed_runs: self.failures.len(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn metrics_csv(runs: &[RunOutcome]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in runs {
        for e in &r.epochs {
            let _ = writeln!(
                out,
                "{},{},{},train,{},{},{},{},{},{:.6},",
                r.run_id, r.seed, e.epoch, e.loss_c, e.loss_ms, e.loss_total, e.top1, e.top5, e.train_s
            );
        }
        let t = &r.test;
        let _ = writeln!(
            out,
            "{},{},{},test,{},{},{},{},{},,{:.6}",
            r.run_id,
            r.seed,
            r.epochs.len(),
            t.loss_c,
            t.loss_ms,
            t.loss_total,
            t.metrics.top1,
            t.metrics.top5,
            t.eval_s
        );
    }
    out
}

pub fn per_class_csv(runs: &[RunOutcome], classes: &[String]) -> String {
    let mut out = String::from("run_id,seed,class,precision,recall\n");
    for r in runs {
        for (c, name) in classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.run_id, r.seed, name, r.test.metrics.precision[c], r.test.metrics.recall[c]
            );
        }
    }
    out
}

pub fn summary_csv(rows: &[Summary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{},{},{},{}",
            s.variant,
            s.acc_mean,
            s.acc_std,
            s.top5_mean,
            s.test_time_s_mean,
            s.train_time_per_epoch_s_mean,
            s.train_top1_mean,
            opt(s.ms_iou_mean),
            s.params,
            s.failed_runs
        );
    }
    out
}

fn train_one(config: &Config, data: &Dataset, index: usize, seed: u64, out: Option<&Path>) -> Result<RunOutcome> {
    let run_id = format!("run{index}");
    let mut trainer = Trainer::new(config, data, seed)?;
    let mut epochs = Vec::with_capacity(config.train.epochs);
    for _ in 0..config.train.epochs {
        epochs.push(trainer.train_epoch()?);
    }
    let test = trainer.evaluate(Split::Test)?;
    let train_top1 = trainer.evaluate(Split::Train)?.metrics.top1;
    if let (Some(dir), true) = (out, config.train.save_checkpoints) {
        checkpoint::save(
            &dir.join("checkpoints").join(&run_id),
            &trainer.params,
            config,
            seed,
            config.train.epochs,
            &trainer.rng_cursors(),
        )?;
    }
    Ok(RunOutcome {
        run_id,
        seed,
        epochs,
        test,
        train_top1,
        params: trainer.params.num_scalars(),
        weights: trainer.params,
    })
}

/// Trains one model per seed. Failing seeds are recorded and the remaining
/// seeds still run. With `out`, writes `metrics.csv`, `per_class.csv`,
/// `summary.csv` and per-run checkpoints there.
pub fn run_experiment(config: &Config, data: &Dataset, variant: &str, out: Option<&Path>) -> Result<Experiment> {
    config.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut exp = Experiment {
        variant: variant.to_string(),
        runs: Vec::new(),
        failures: Vec::new(),
    };
    for (i, &seed) in config.train.seeds.iter().enumerate() {
        match train_one(config, data, i, seed, out) {
            Ok(run) => exp.runs.push(run),
            Err(e) if e.is_validation() => return Err(e),
            Err(e) => exp.failures.push((seed, e.to_string())),
        }
    }
    if let Some(dir) = out {
        fs::write(dir.join("metrics.csv"), metrics_csv(&exp.runs))?;
        fs::write(dir.join("per_class.csv"), per_class_csv(&exp.runs, &data.manifest.classes))?;
        fs::write(dir.join("summary.csv"), summary_csv(&[exp.summary()]))?;
        if exp.failed() {
            let text: String = exp.failures.iter().map(|(s, e)| format!("seed {s}: {e}\n")).collect();
            fs::write(dir.join("failures.txt"), text)?;
        }
    }
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let scores = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let m = score_metrics(&scores, &[0, 1, 2], 3).unwrap();
        assert_eq!((m.top1, m.top5), (1.0, 1.0));
        assert!(m.precision.iter().chain(&m.recall).all(|&x| x == 1.0));
    }

    #[test]
    fn constant_predictor_on_balanced_six_classes() {
        let labels: Vec<usize> = (0..60).map(|i| i % 6).collect();
        let scores = vec![vec![0.0; 6]; 60];
        let m = score_metrics(&scores, &labels, 6).unwrap();
        assert!((m.top1 - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.recall[0], 1.0);
        assert!((m.precision[0] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.precision[3], 0.0);
        // Ties rank lower indices first: classes 0..4 are the top five.
        assert!((m.top5 - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn fewer_than_five_classes_top5_is_one() {
        let scores = vec![vec![3.0, 2.0, 1.0, 0.0]];
        let m = score_metrics(&scores, &[3], 4).unwrap();
        assert_eq!(m.top1, 0.0);
        assert_eq!(m.top5, 1.0);
    }

    #[test]
    fn empty_split_is_a_contract_error() {
        assert!(matches!(score_metrics(&[], &[], 3), Err(CoreError::Contract(_))));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[0.8, 0.9, 1.0]);
        assert!((m - 0.9).abs() < 1e-12);
        assert!((s - 0.0816).abs() < 1e-4);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn soft_iou_cases() {
        assert_eq!(soft_iou(&[0.5, 0.5], &[0.5, 0.5]), 1.0);
        assert_eq!(soft_iou(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((soft_iou(&[0.5, 0.5], &[1.0, 0.0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noop_timing_is_fast() {
        let ((), s) = measure_timing(|| ());
        assert!(s < 0.01);
    }
}
