//! End-to-end behaviour on a small generated dataset: determinism, learning
//! rate semantics, baseline equivalence, checkpoints and the ablation grid.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use egoms_core::ablation::{parse_report_csv, report_csv, resolve_grid, run_grid, write_report};
use egoms_core::checkpoint;
use egoms_core::dataset::{gen_dataset, gen_motion_maps, Dataset, Manifest};
use egoms_core::preprocess::Split;
use egoms_core::train::{evaluate, metrics_csv, run_experiment, Trainer, METRICS_HEADER};
use egoms_core::{Config, CoreError};

fn small_config() -> Config {
    let mut c = Config::default();
    c.apply_text(
        "data.clips_per_class = 3
         data.train_fraction = 0.67
         data.clip_length = 12
         model.input_size = 32
         model.stage_channels = 4,4,6,8
         model.hidden = 4
         model.ms_reduce = 4
         train.epochs = 2
         train.n_frames = 3
         train.seeds = 5,6
         ablation.long_frames = 6",
    )
    .unwrap();
    c.data.resize_height = 36;
    c.validate().unwrap();
    c
}

/// Dataset with motion maps, generated once per test binary.
fn fixture() -> &'static (PathBuf, Dataset) {
    static DATA: OnceLock<(PathBuf, Dataset)> = OnceLock::new();
    DATA.get_or_init(|| {
        let root = tempfile::tempdir().unwrap().keep().join("data");
        let c = small_config();
        gen_dataset(&c.data, &root).unwrap();
        gen_motion_maps(&root, &c).unwrap();
        let data = Dataset::load(&root, true).unwrap();
        (root, data)
    })
}

/// metrics.csv with the two timing columns blanked.
fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            let n = cells.len();
            cells[n - 2] = "";
            cells[n - 1] = "";
            cells.join(",") + "\n"
        })
        .collect()
}

#[test]
fn dataset_generation_is_deterministic_and_refuses_to_overwrite() {
    let (root, _) = fixture();
    let c = small_config();
    let other = tempfile::tempdir().unwrap();
    let m = gen_dataset(&c.data, other.path()).unwrap();
    let original = Manifest::read(root).unwrap();
    assert_eq!(m.hash().unwrap(), original.hash().unwrap());
    for e in &m.entries {
        let a = fs::read(root.join(&e.path).join("frames.sptn")).unwrap();
        let b = fs::read(other.path().join(&e.path).join("frames.sptn")).unwrap();
        assert_eq!(a, b, "{}", e.clip_id);
    }
    assert!(matches!(gen_dataset(&c.data, other.path()), Err(CoreError::Config(_))));
    assert_eq!(m.entries.len(), 18);
    assert_eq!(m.split(Split::Train).count(), 12);
}

#[test]
fn zero_learning_rates_leave_parameters_unchanged() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.train.lr_backbone = 0.0;
    c.train.lr_convlstm = 0.0;
    c.train.lr_classifier = 0.0;
    c.train.lr_ms_head = 0.0;
    let mut t = Trainer::new(&c, data, 3).unwrap();
    let before = t.params.clone();
    t.train_epoch().unwrap();
    assert_eq!(t.params, before);
}

#[test]
fn freezing_keeps_lower_backbone_and_trains_the_rest() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.model.freeze_lower = true;
    let mut t = Trainer::new(&c, data, 3).unwrap();
    let before = t.params.clone();
    t.train_epoch().unwrap();
    for (name, value) in t.params.iter() {
        let same = before.get(name) == Some(value);
        assert_eq!(same, egoms_core::model::is_lower(name), "{name}");
    }
}

#[test]
fn unweighted_ms_head_matches_the_baseline_bitwise() {
    let (_, data) = fixture();
    let mut base = small_config();
    base.model.ms_on = false;
    let mut side = small_config();
    side.train.ms_weight = 0.0;
    let a = run_experiment(&base, data, "baseline", None).unwrap();
    let b = run_experiment(&side, data, "ms_w0", None).unwrap();
    assert_eq!(without_timing(&metrics_csv(&a.runs)), without_timing(&metrics_csv(&b.runs)));
    assert!(metrics_csv(&a.runs).starts_with(METRICS_HEADER));
    for (ra, rb) in a.runs.iter().zip(&b.runs) {
        for (name, value) in ra.weights.iter() {
            assert_eq!(rb.weights.get(name), Some(value), "{name}");
        }
    }
}

#[test]
fn checkpoints_reproduce_test_metrics() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.train.epochs = 1;
    c.train.seeds = vec![9];
    let out = tempfile::tempdir().unwrap();
    let exp = run_experiment(&c, data, "ms_t5", Some(out.path())).unwrap();
    for f in ["metrics.csv", "per_class.csv", "summary.csv"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    let ck = checkpoint::load(&out.path().join("checkpoints").join("run0")).unwrap();
    assert_eq!((ck.seed, ck.epoch), (9, 1));
    assert_eq!(ck.config, c);
    let again = evaluate(&ck.config, &ck.config.model_config(), &ck.params, data, Split::Test).unwrap();
    let first = &exp.runs[0].test;
    assert_eq!(again.metrics, first.metrics);
    assert_eq!(again.loss_c.to_bits(), first.loss_c.to_bits());
    assert_eq!(again.ms_iou, first.ms_iou);
}

#[test]
fn repeated_runs_are_identical_apart_from_timing() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.train.epochs = 1;
    let a = run_experiment(&c, data, "x", None).unwrap();
    let b = run_experiment(&c, data, "x", None).unwrap();
    assert_eq!(without_timing(&metrics_csv(&a.runs)), without_timing(&metrics_csv(&b.runs)));
}

fn check_report(dir: &Path, variants: usize) {
    let text = fs::read_to_string(dir.join("ablation_report.csv")).unwrap();
    let rows = parse_report_csv(&text).unwrap();
    assert_eq!(rows.len(), variants);
    assert_eq!(report_csv(&rows), text);
    assert!(dir.join("ablation_report.md").exists());
}

#[test]
fn grid_records_failures_and_keeps_going() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.train.epochs = 1;
    c.train.seeds = vec![1];
    // Steps of f32::MAX push the weights to the edge of the f32 range, so
    // the next forward pass overflows.
    c.train.lr_backbone = f32::MAX as f64;
    c.train.lr_convlstm = f32::MAX as f64;
    c.train.lr_classifier = f32::MAX as f64;
    let grid = resolve_grid("baseline,ms_t5", &c).unwrap();
    let out = tempfile::tempdir().unwrap();
    let rows = run_grid(&grid, &c, data, Some(out.path())).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.failed_runs == 1 && r.acc_mean.is_nan()));
    write_report(out.path(), &rows).unwrap();
    let failures = fs::read_to_string(out.path().join("baseline").join("failures.txt")).unwrap();
    assert!(failures.starts_with("seed 1: non-finite"), "{failures}");
    let md = fs::read_to_string(out.path().join("ablation_report.md")).unwrap();
    assert!(md.contains("| ms_t5 |"));
}

#[test]
fn small_grid_reports_every_variant_in_order() {
    let (_, data) = fixture();
    let mut c = small_config();
    c.train.epochs = 1;
    c.train.seeds = vec![1];
    let grid = resolve_grid("baseline,baseline_long,ms_t3", &c).unwrap();
    let out = tempfile::tempdir().unwrap();
    let rows = run_grid(&grid, &c, data, Some(out.path())).unwrap();
    write_report(out.path(), &rows).unwrap();
    check_report(out.path(), 3);
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["baseline", "baseline_long", "ms_t3"]);
    assert_eq!(rows[1].frames, 6);
    assert!(rows.iter().all(|r| r.failed_runs == 0 && r.acc_mean.is_finite()));
}
