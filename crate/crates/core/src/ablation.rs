//! Variant grid over the MS head, its tap, the frame count, CAM attention and
//! lower-backbone freezing, with a markdown and CSV report.
//!
//! Every variant trains with the same seeds, and each run's random streams
//! depend only on its seed, so a variant's results do not depend on where
//! it sits in the grid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::Config;
use crate::dataset::Dataset;
use crate::error::{CoreError, Result};
use crate::model::Tap;
use crate::train::{run_experiment, Summary};

pub const REPORT_HEADER: &str = "variant,ms_on,tap,frames,cam,freeze_lower,ms_weight,acc_mean,acc_std,top5_mean,test_time_s,train_time_per_epoch_s,ms_iou_mean,params,failed_runs";

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub name: String,
    pub ms_on: bool,
    /// Only meaningful with `ms_on`.
    pub tap: Tap,
    pub n_frames: usize,
    pub cam_on: bool,
    pub freeze_lower: bool,
    pub ms_weight: f64,
}

impl VariantSpec {
    fn new(name: &str, ms_on: bool, tap: Tap, n_frames: usize) -> Self {
        Self {
            name: name.to_string(),
            ms_on,
            tap,
            n_frames,
            cam_on: false,
            freeze_lower: false,
            ms_weight: 1.0,
        }
    }

    /// `base` with this variant's switches applied; the frame count is
    /// clamped to the clip length.
    pub fn apply(&self, base: &Config) -> Config {
        let mut c = base.clone();
        c.model.ms_on = self.ms_on;
        c.model.tap = self.tap;
        c.model.cam_on = self.cam_on;
        c.model.freeze_lower = self.freeze_lower;
        c.train.ms_weight = self.ms_weight;
        c.train.n_frames = self.n_frames.min(base.data.clip_length);
        c
    }
}

/// Every known variant, in report order. `long` is the long frame count.
pub fn catalog(short: usize, long: usize) -> Vec<VariantSpec> {
    let mut v = vec![
        VariantSpec::new("baseline", false, Tap::T5, short),
        VariantSpec::new("baseline_long", false, Tap::T5, long),
        VariantSpec::new("ms_t3", true, Tap::T3, short),
        VariantSpec::new("ms_t4", true, Tap::T4, short),
        VariantSpec::new("ms_t5", true, Tap::T5, short),
        VariantSpec::new("ms_t5_long", true, Tap::T5, long),
        VariantSpec::new("ms_t5_cam", true, Tap::T5, short),
        VariantSpec::new("frozen_cam", false, Tap::T5, short),
        VariantSpec::new("ms_t5_w0", true, Tap::T5, short),
    ];
    v[6].cam_on = true;
    v[7].cam_on = true;
    v[7].freeze_lower = true;
    v[8].ms_weight = 0.0;
    v
}

/// Resolves `default`, `all` or a comma-separated list of variant names.
/// The short frame count is `train.n_frames`.
pub fn resolve_grid(spec: &str, config: &Config) -> Result<Vec<VariantSpec>> {
    let all = catalog(config.train.n_frames, config.ablation.long_frames);
    let grid: Vec<VariantSpec> = match spec.trim() {
        "default" => all.into_iter().take(8).collect(),
        "all" => all,
        list => {
            let mut out: Vec<VariantSpec> = Vec::new();
            for name in list.split(',').map(str::trim) {
                let v = all
                    .iter()
                    .find(|v| v.name == name)
                    .ok_or_else(|| CoreError::Config(format!("unknown ablation variant {name:?}")))?;
                if out.iter().any(|o| o.name == name) {
                    return Err(CoreError::Config(format!("variant {name:?} listed twice")));
                }
                out.push(v.clone());
            }
            out
        }
    };
    if grid.is_empty() {
        return Err(CoreError::Config("empty ablation grid".into()));
    }
    Ok(grid)
}

/// One report line: the variant's switches and its aggregated results.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub variant: String,
    pub ms_on: bool,
    /// `None` when the MS head is off.
    pub tap: Option<Tap>,
    pub frames: usize,
    pub cam: bool,
    pub freeze_lower: bool,
    pub ms_weight: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub top5_mean: f64,
    pub test_time_s: f64,
    pub train_time_per_epoch_s: f64,
    pub ms_iou_mean: Option<f64>,
    pub params: usize,
    pub failed_runs: usize,
}

impl ReportRow {
    pub fn new(spec: &VariantSpec, config: &Config, s: &Summary) -> Self {
        Self {
            variant: spec.name.clone(),
            ms_on: spec.ms_on,
            tap: spec.ms_on.then_some(spec.tap),
            frames: config.train.n_frames,
            cam: spec.cam_on,
            freeze_lower: spec.freeze_lower,
            ms_weight: spec.ms_weight,
            acc_mean: s.acc_mean,
            acc_std: s.acc_std,
            top5_mean: s.top5_mean,
            test_time_s: s.test_time_s_mean,
            train_time_per_epoch_s: s.train_time_per_epoch_s_mean,
            ms_iou_mean: s.ms_iou_mean,
            params: s.params,
            failed_runs: s.failed_runs,
        }
    }
}

/// Trains every variant over `base.train.seeds`. A variant whose runs fail
/// is reported with its failure count and the grid moves on; invalid
/// configurations still abort.
pub fn run_grid(grid: &[VariantSpec], base: &Config, data: &Dataset, out: Option<&Path>) -> Result<Vec<ReportRow>> {
    let configs: Vec<Config> = grid.iter().map(|v| v.apply(base)).collect();
    for c in &configs {
        c.validate()?;
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (spec, config) in grid.iter().zip(&configs) {
        let dir = out.map(|d| d.join(&spec.name));
        let exp = run_experiment(config, data, &spec.name, dir.as_deref())?;
        rows.push(ReportRow::new(spec, config, &exp.summary()));
    }
    Ok(rows)
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.ms_on,
            r.tap.map_or("-".to_string(), |t| t.to_string()),
            r.frames,
            r.cam,
            r.freeze_lower,
            r.ms_weight,
            r.acc_mean,
            r.acc_std,
            r.top5_mean,
            r.test_time_s,
            r.train_time_per_epoch_s,
            opt(r.ms_iou_mean),
            r.params,
            r.failed_runs
        );
    }
    out
}

fn field<T: std::str::FromStr>(cells: &[&str], i: usize, line: usize) -> Result<T> {
    cells[i]
        .parse()
        .map_err(|_| CoreError::Data(format!("report line {line}: bad value {:?} in column {i}", cells[i])))
}

/// Parses [`report_csv`] output back into rows.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(CoreError::Data("report header mismatch".into()));
    }
    let columns = REPORT_HEADER.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 2;
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != columns {
                return Err(CoreError::Data(format!("report line {line}: {} cells, expected {columns}", c.len())));
            }
            Ok(ReportRow {
                variant: c[0].to_string(),
                ms_on: field(&c, 1, line)?,
                tap: if c[2] == "-" { None } else { Some(field(&c, 2, line)?) },
                frames: field(&c, 3, line)?,
                cam: field(&c, 4, line)?,
                freeze_lower: field(&c, 5, line)?,
                ms_weight: field(&c, 6, line)?,
                acc_mean: field(&c, 7, line)?,
                acc_std: field(&c, 8, line)?,
                top5_mean: field(&c, 9, line)?,
                test_time_s: field(&c, 10, line)?,
                train_time_per_epoch_s: field(&c, 11, line)?,
                ms_iou_mean: if c[12].is_empty() { None } else { Some(field(&c, 12, line)?) },
                params: field(&c, 13, line)?,
                failed_runs: field(&c, 14, line)?,
            })
        })
        .collect()
}

/// Soft check on the tap sweep: `Some(true)` when T5 ≥ T4 ≥ T3 in mean
/// accuracy among the single-switch MS rows at the short frame count,
/// `None` when a tap is missing.
pub fn tap_ordering(rows: &[ReportRow]) -> Option<bool> {
    let frames = rows.iter().filter(|r| r.ms_on).map(|r| r.frames).min()?;
    let acc = |tap: Tap| {
        rows.iter()
            .find(|r| r.tap == Some(tap) && r.frames == frames && !r.cam && !r.freeze_lower && r.ms_weight == 1.0)
            .map(|r| r.acc_mean)
    };
    let (t3, t4, t5) = (acc(Tap::T3)?, acc(Tap::T4)?, acc(Tap::T5)?);
    Some(t5 >= t4 && t4 >= t3)
}

fn pct(x: f64) -> String {
    if x.is_nan() {
        "n/a".to_string()
    } else {
        format!("{:.2}", 100.0 * x)
    }
}

pub fn report_markdown(rows: &[ReportRow]) -> String {
    let mut out = String::from("# Ablation report\n\n");
    out.push_str("| variant | tap | frames | cam | freeze_lower | acc_mean (%) | acc_std (%) | test_time_s | train_time_per_epoch_s | params | failed_runs |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {:.3} | {:.3} | {} | {} |",
            r.variant,
            r.tap.map_or("-".to_string(), |t| t.to_string()),
            r.frames,
            r.cam,
            r.freeze_lower,
            pct(r.acc_mean),
            pct(r.acc_std),
            r.test_time_s,
            r.train_time_per_epoch_s,
            r.params,
            r.failed_runs
        );
    }
    out.push('\n');
    let flag = match tap_ordering(rows) {
        Some(true) => "holds",
        Some(false) => "does not hold",
        None => "not evaluated (tap sweep incomplete)",
    };
    let _ = writeln!(out, "Tap ordering T5 >= T4 >= T3 (reported, not enforced): {flag}.");
    out.push_str("Timings are wall-clock seconds of forward, backward and optimizer work; data preparation is excluded.\n");
    out
}

/// Writes `ablation_report.md` and `ablation_report.csv` into `dir`.
pub fn write_report(dir: &Path, rows: &[ReportRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(CoreError::Contract("an ablation report needs at least one row".into()));
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("ablation_report.md"), report_markdown(rows))?;
    fs::write(dir.join("ablation_report.csv"), report_csv(rows))?;
    Ok(())
}
