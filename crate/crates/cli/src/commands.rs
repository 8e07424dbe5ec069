//! Argument definitions and the command implementations.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use egoms_core::ablation::{parse_report_csv, resolve_grid, run_grid, write_report};
use egoms_core::checkpoint;
use egoms_core::dataset::{gen_dataset, gen_motion_maps, gt_report_csv, Dataset};
use egoms_core::gradcheck::{model_grad_check, parameter_name, tiny_model};
use egoms_core::preprocess::Split;
use egoms_core::train::{evaluate, run_experiment};
use egoms_core::{Config, CoreError};
use egoms_tensor::suite::gradient_suite;
use thiserror::Error;

pub const VERSION_LINE: &str = concat!("# egoms ", env!("CARGO_PKG_VERSION"));
pub const RESOLVED_CONFIG: &str = "resolved_config.txt";
/// Pass thresholds of `grad-check`: per-op suite and tiny whole model.
pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    ChecksFailed(String),
}

impl From<egoms_tensor::TensorError> for CliError {
    fn from(e: egoms_tensor::TensorError) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "egoms", version, about = "Egocentric action recognition with a motion-segmentation side task")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration flags shared by every command that takes a config.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines applied over the defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Single `key=value` override applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run seed; which key it sets depends on the command.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic dataset into --out (--seed sets data.seed).
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Compute motion ground truth for every clip of --data (--seed sets gt.seed).
    GenMotionMaps {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Directory for the report and resolved config; defaults to
        /// `<data>/motion_gt` so the dataset's own resolved config is kept.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train one variant over train.seeds (--seed replaces the list).
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Variant name written into summary.csv.
        #[arg(long, default_value = "train")]
        variant: String,
    },
    /// Evaluate a checkpoint directory on one split.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train every variant of an ablation grid and write the report.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// `default`, `all` or comma-separated variant names; overrides ablation.grid.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Check analytic gradients of every op and of a tiny whole model.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random instances per op.
        #[arg(long, default_value_t = 10)]
        instances: usize,
        /// Directory for grad_check.csv; nothing is written without it.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Re-render the report of an ablation or training run directory.
    Report {
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

impl ConfigArgs {
    /// Defaults, then the config file, then `--set` overrides.
    fn resolve(&self, base: Config) -> Result<Config> {
        let mut config = base;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            config.apply_text(&text)?;
        }
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
            config.set(key.trim(), value)?;
        }
        Ok(config)
    }
}

fn write_resolved(out: &Path, command: &str, config: &Config) -> Result<()> {
    fs::create_dir_all(out)?;
    let text = format!("{VERSION_LINE}\n# command: {command}\n{}", config.to_text());
    fs::write(out.join(RESOLVED_CONFIG), text)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { cfg, out } => {
            let mut config = cfg.resolve(Config::default())?;
            if let Some(seed) = cfg.seed {
                config.data.seed = seed;
            }
            config.validate()?;
            let manifest = gen_dataset(&config.data, &out)?;
            write_resolved(&out, "gen-data", &config)?;
            let train = manifest.split(Split::Train).count();
            println!(
                "wrote {} clips ({train} train, {} test) of {} classes to {}",
                manifest.entries.len(),
                manifest.entries.len() - train,
                manifest.classes.len(),
                out.display()
            );
            println!("manifest sha256 {}", manifest.hash()?);
        }
        Command::GenMotionMaps { cfg, data, out } => {
            let mut config = cfg.resolve(Config::default())?;
            if let Some(seed) = cfg.seed {
                config.gt.seed = seed;
            }
            config.validate()?;
            let reports = gen_motion_maps(&data, &config)?;
            let out = out.unwrap_or_else(|| data.join("motion_gt"));
            write_resolved(&out, "gen-motion-maps", &config)?;
            fs::write(out.join("gt_report.csv"), gt_report_csv(&reports))?;
            let n = reports.len().max(1) as f64;
            println!(
                "motion ground truth for {} clips: mean IoU vs true masks {:.3}, mean moving fraction {:.4}",
                reports.len(),
                reports.iter().map(|r| r.iou).sum::<f64>() / n,
                reports.iter().map(|r| r.moving_fraction).sum::<f64>() / n
            );
        }
        Command::Train { cfg, data, out, variant } => {
            let mut config = cfg.resolve(Config::default())?;
            if let Some(seed) = cfg.seed {
                config.train.seeds = vec![seed];
            }
            config.validate()?;
            let dataset = Dataset::load(&data, config.model.ms_on)?;
            write_resolved(&out, "train", &config)?;
            let exp = run_experiment(&config, &dataset, &variant, Some(&out))?;
            let s = exp.summary();
            println!(
                "{variant}: test top1 {:.4} +- {:.4} over {} runs, train top1 {:.4}, {:.3} s/epoch",
                s.acc_mean,
                s.acc_std,
                exp.runs.len(),
                s.train_top1_mean,
                s.train_time_per_epoch_s_mean
            );
            if let Some(iou) = s.ms_iou_mean {
                println!("{variant}: MS map IoU {iou:.4}");
            }
            if exp.failed() {
                return Err(CliError::ChecksFailed(format!(
                    "{} of {} runs failed; see {}",
                    exp.failures.len(),
                    config.train.seeds.len(),
                    out.join("failures.txt").display()
                )));
            }
        }
        Command::Eval { cfg, checkpoint: dir, data, out, split } => {
            let ck = checkpoint::load(&dir)?;
            let config = cfg.resolve(ck.config.clone())?;
            if cfg.seed.is_some() {
                return Err(CliError::Usage("eval is deterministic and takes no --seed".into()));
            }
            config.validate()?;
            if config.model_config() != ck.config.model_config() {
                return Err(CliError::Usage("eval overrides may not change the model".into()));
            }
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let dataset = Dataset::load(&data, false)?;
            let r = evaluate(&config, &config.model_config(), &ck.params, &dataset, split)?;
            write_resolved(&out, "eval", &config)?;
            let iou = r.ms_iou.map_or(String::new(), |v| v.to_string());
            let split_name = if split == Split::Train { "train" } else { "test" };
            fs::write(
                out.join("eval.csv"),
                format!(
                    "split,loss_c,loss_ms,loss_total,top1,top5,ms_iou,eval_s\n{split_name},{},{},{},{},{},{iou},{:.6}\n",
                    r.loss_c, r.loss_ms, r.loss_total, r.metrics.top1, r.metrics.top5, r.eval_s
                ),
            )?;
            let mut per_class = String::from("class,precision,recall\n");
            for (c, name) in dataset.manifest.classes.iter().enumerate() {
                let _ = writeln!(per_class, "{name},{},{}", r.metrics.precision[c], r.metrics.recall[c]);
            }
            fs::write(out.join("per_class.csv"), per_class)?;
            println!("{split_name}: top1 {:.4} top5 {:.4} loss {:.4}", r.metrics.top1, r.metrics.top5, r.loss_total);
        }
        Command::Ablate { cfg, data, out, grid } => {
            let mut config = cfg.resolve(Config::default())?;
            if let Some(seed) = cfg.seed {
                config.train.seeds = vec![seed];
            }
            if let Some(g) = grid {
                config.ablation.grid = g;
            }
            config.validate()?;
            let variants = resolve_grid(&config.ablation.grid, &config)?;
            let needs_motion = variants.iter().any(|v| v.ms_on);
            let dataset = Dataset::load(&data, needs_motion)?;
            write_resolved(&out, "ablate", &config)?;
            let rows = run_grid(&variants, &config, &dataset, Some(&out))?;
            write_report(&out, &rows)?;
            for r in &rows {
                println!(
                    "{:<12} frames {:>2}  acc {:.4} +- {:.4}  {:.3} s/epoch  failed {}",
                    r.variant, r.frames, r.acc_mean, r.acc_std, r.train_time_per_epoch_s, r.failed_runs
                );
            }
            println!("report: {}", out.join("ablation_report.md").display());
        }
        Command::GradCheck { seed, instances, out } => grad_check(seed, instances, out.as_deref())?,
        Command::Report { run, out } => report(&run, &out)?,
    }
    Ok(())
}

fn grad_check(seed: u64, instances: usize, out: Option<&Path>) -> Result<()> {
    if instances == 0 {
        return Err(CliError::Usage("--instances must be positive".into()));
    }
    let mut csv = String::from("check,instances,max_rel_error,tolerance,pass\n");
    let mut failed = Vec::new();
    let mut line = |name: &str, n: usize, err: f64, tol: f64| {
        let pass = err < tol;
        println!("{name:<18} max rel err {err:.3e}  {}", if pass { "ok" } else { "FAIL" });
        let _ = writeln!(csv, "{name},{n},{err:e},{tol:e},{pass}");
        if !pass {
            failed.push(name.to_string());
        }
    };
    for check in gradient_suite(instances, seed)? {
        line(check.op, check.instances, check.max_rel_error, OP_TOLERANCE);
    }
    let cfg = tiny_model();
    let r = model_grad_check(&cfg, seed)?;
    line("tiny_model", 1, r.max_rel_error, MODEL_TOLERANCE);
    if !(r.max_rel_error < MODEL_TOLERANCE) {
        println!("  worst parameter: {}[{}]", parameter_name(&cfg, &r)?, r.index);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(RESOLVED_CONFIG),
            format!("{VERSION_LINE}\n# command: grad-check\n# seed = {seed}\n# instances = {instances}\n"),
        )?;
        fs::write(dir.join("grad_check.csv"), csv)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(format!("gradient checks failed: {}", failed.join(", "))))
    }
}

/// CSV text as a markdown table.
fn csv_to_markdown(csv: &str) -> String {
    let mut lines = csv.lines().filter(|l| !l.is_empty());
    let Some(header) = lines.next() else {
        return String::new();
    };
    let cols = header.split(',').count();
    let mut md = format!("| {} |\n|{}\n", header.replace(',', " | "), "---|".repeat(cols));
    for l in lines {
        let _ = writeln!(md, "| {} |", l.replace(',', " | "));
    }
    md
}

fn report(run: &Path, out: &Path) -> Result<()> {
    let ablation = run.join("ablation_report.csv");
    let summary = run.join("summary.csv");
    if ablation.exists() {
        let rows = parse_report_csv(&fs::read_to_string(&ablation)?)?;
        write_report(out, &rows)?;
        println!("re-rendered {} variants into {}", rows.len(), out.join("ablation_report.md").display());
    } else if summary.exists() {
        fs::create_dir_all(out)?;
        let mut md = String::from("# Training report\n\n## Summary\n\n");
        md.push_str(&csv_to_markdown(&fs::read_to_string(&summary)?));
        let per_class = run.join("per_class.csv");
        if per_class.exists() {
            md.push_str("\n## Per class\n\n");
            md.push_str(&csv_to_markdown(&fs::read_to_string(per_class)?));
        }
        fs::write(out.join("report.md"), md)?;
        println!("wrote {}", out.join("report.md").display());
    } else {
        return Err(CliError::Usage(format!(
            "{} holds neither ablation_report.csv nor summary.csv",
            run.display()
        )));
    }
    Ok(())
}
