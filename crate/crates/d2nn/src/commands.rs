//! Subcommand implementations.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use d2nn_core::network::{build_model, forward_trace, CompiledModel};
use d2nn_core::readout::decide;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Metadata};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::export::{export_heatmap, export_trace, write_csv, FieldView};
use crate::report::{check_published, EfficiencyReport, EvalSummary, ReportConfig, PUBLISHED};
use crate::sweep::{heatmap, noise_sweep, rows_csv, summarize, summary_csv, SweepRow};
use crate::trainer::{evaluate, propagator_for, train, EpochMetrics};

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Trains from scratch; writes the checkpoint, `metrics.jsonl` and
/// `summary.json` into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let _lock = OutputLock::acquire(out)?;
    let tasks = cfg.load_tasks()?;
    let mut model = build_model(&cfg.arch)?;
    let propagator = propagator_for(&model)?;
    let log_path = out.join("metrics.jsonl");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let outcome = train(&mut model, &propagator, &tasks, &cfg.train, &cfg.data.encoding, |m| {
        eprintln!(
            "epoch {:>3}  loss {:?}  test accuracy {:?}  {:.1}s",
            m.epoch, m.train_loss, m.test_accuracy, m.wall_time_s
        );
        let line = serde_json::to_string(m).expect("metrics serialize");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    let ckpt = Checkpoint {
        model,
        metadata: Metadata::for_training(&cfg.train, cfg.train.epochs),
        optimizer: outcome.optimizer,
    };
    save_checkpoint(&ckpt, out.join(CHECKPOINT_FILE))?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({
            "epochs": cfg.train.epochs,
            "tasks": tasks.iter().map(|t| &t.name).collect::<Vec<_>>(),
            "final": outcome.metrics.last(),
            "cfg_hash": ckpt.metadata.cfg_hash,
        }),
    )?;
    Ok((ckpt, outcome.metrics))
}

fn load_matching(cfg: &RunConfig, checkpoint: &Path) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(checkpoint)?;
    if ckpt.model.tasks() != cfg.data.tasks.len() {
        return Err(Error::Config(vec![format!(
            "checkpoint has {} tasks but the config lists {} datasets",
            ckpt.model.tasks(),
            cfg.data.tasks.len()
        )]));
    }
    Ok(ckpt)
}

/// Clean test accuracy per task, written to `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalSummary> {
    cfg.validate()?;
    let ckpt = load_matching(cfg, checkpoint)?;
    let tasks = cfg.load_tasks()?;
    let propagator = propagator_for(&ckpt.model)?;
    let accuracy = evaluate(&ckpt.model, &propagator, &tasks, &cfg.data.encoding)?;
    let summary = EvalSummary {
        tasks: tasks.iter().map(|t| t.name.clone()).collect(),
        accuracy,
        detectors: ckpt.model.layout.detector_count(),
        samples: tasks.iter().map(|t| t.test.len()).collect(),
    };
    let out = &cfg.output_dir;
    let _lock = OutputLock::acquire(out)?;
    write_json(&out.join("eval.json"), &summary)?;
    Ok(summary)
}

/// Noise sweep: `sweep.csv`, `sweep_summary.csv` and per-task heatmaps.
pub fn cmd_sweep(cfg: &RunConfig, checkpoint: &Path) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let ckpt = load_matching(cfg, checkpoint)?;
    let tasks = cfg.load_tasks()?;
    let propagator = propagator_for(&ckpt.model)?;
    let tests: Vec<_> = tasks.iter().map(|t| t.test.clone()).collect();
    let rows = noise_sweep(&ckpt.model, &propagator, &tests, &cfg.data.encoding, &cfg.noise)?;
    let summary = summarize(&rows);

    let out = &cfg.output_dir;
    let _lock = OutputLock::acquire(out)?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("sweep.csv", rows_csv(&rows))?;
    write("sweep_summary.csv", summary_csv(&summary))?;

    let g = &cfg.noise;
    for task in 0..tests.len() {
        for (k, &eps) in g.splitter_epsilons.iter().enumerate() {
            let values = heatmap(
                &summary,
                task,
                |s| s.detector_sigma,
                |s| s.device_sigma,
                &g.detector_sigmas,
                &g.device_sigmas,
                |s| s.splitter_epsilon == eps,
            );
            let path = out.join(format!("heatmap_task{task}_detector_device_eps{k}.pgm"));
            export_heatmap(&values, g.detector_sigmas.len(), g.device_sigmas.len(), path)?;
        }
        if g.splitter_epsilons.len() > 1 {
            for (k, &dev) in g.device_sigmas.iter().enumerate() {
                let values = heatmap(
                    &summary,
                    task,
                    |s| s.detector_sigma,
                    |s| s.splitter_epsilon,
                    &g.detector_sigmas,
                    &g.splitter_epsilons,
                    |s| s.device_sigma == dev,
                );
                let path = out.join(format!("heatmap_task{task}_detector_splitter_dev{k}.pgm"));
                export_heatmap(&values, g.detector_sigmas.len(), g.splitter_epsilons.len(), path)?;
            }
        }
    }
    Ok(rows)
}

/// Stage images of one test sample plus its detector reading as CSV.
pub fn cmd_visualize(
    cfg: &RunConfig,
    checkpoint: &Path,
    task: usize,
    sample: usize,
    view: FieldView,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let ckpt = load_matching(cfg, checkpoint)?;
    let tasks = cfg.load_tasks()?;
    let data = tasks
        .get(task)
        .ok_or_else(|| Error::Config(vec![format!("task {task} does not exist")]))?;
    if sample >= data.test.len() {
        return Err(Error::Config(vec![format!(
            "sample {sample} is out of range for {} test images",
            data.test.len()
        )]));
    }
    let model = &ckpt.model;
    let spec = &model.spec;
    let x = data.test.encode(sample, spec.grid_rows, spec.grid_cols, &cfg.data.encoding)?;
    let propagator = propagator_for(model)?;
    let trace = forward_trace(model, &propagator, &x)?;

    let out = cfg.output_dir.join(format!("visualize_task{task}_sample{sample}"));
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let mut files = export_trace(&trace, view, &out)?;
    let compiled = CompiledModel::new(model)?;
    let reading = compiled.read_image(&trace.intensity);
    let codec = &model.codecs()?[task];
    let predicted = decide(&reading, codec)?;
    let rows: Vec<Vec<String>> = reading
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), v.to_string()])
        .collect();
    let csv = out.join("reading.csv");
    write_csv(&csv, &["cell", "energy"], &rows)?;
    files.push(csv);
    write_json(
        &out.join("prediction.json"),
        &serde_json::json!({ "task": task, "sample": sample, "label": data.test.label(sample), "predicted": predicted }),
    )?;
    Ok(files)
}

/// Efficiency report from eval summaries.
pub fn cmd_report(cfg: &ReportConfig, out: &Path) -> Result<EfficiencyReport> {
    let read = |p: &PathBuf| -> Result<EvalSummary> {
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Ok(serde_json::from_str(&text)?)
    };
    let multi = read(&cfg.multi)?;
    let singles = cfg.singles.iter().map(read).collect::<Result<Vec<_>>>()?;
    let report = EfficiencyReport::from_evals(&multi, &singles)?;
    let _lock = OutputLock::acquire(out)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Recomputes the published efficiency tables, one line per value.
pub fn published_table() -> Result<Vec<String>> {
    PUBLISHED
        .iter()
        .map(|e| {
            let c = check_published(e)?;
            let printed = e.printed.map_or_else(|| "~1".to_string(), |p| format!("{p:.2}"));
            Ok(format!(
                "{:<28}{:<9}computed {:.4}  printed {:>4}  [{}]{}",
                e.system,
                e.task,
                c.computed,
                printed,
                if c.pass { "match" } else { "MISMATCH" },
                if c.pass {
                    String::new()
                } else {
                    format!(
                        " (inputs' rounding allows {:.4}..{:.4})",
                        c.bounds.0, c.bounds.1
                    )
                }
            ))
        })
        .collect()
}
