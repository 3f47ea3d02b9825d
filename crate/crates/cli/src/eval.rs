//! Evaluation: run the trained model over every consecutive-frame pair of a
//! dataset, pool TP/FP/FN counts, and emit the metrics report as both a flat
//! text table and JSON.

use std::fmt::Write as _;
use std::path::Path;

use bevmos_model::metrics::{score_frame, MetricsAccumulator, MetricsReport, DISTANCE_BIN_LABELS};
use bevmos_synth::read_dataset;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{io_err, HarnessError, Result};
use crate::pipeline::{prepare, TrainState};

pub fn evaluate(cfg: &ExperimentConfig, checkpoint: &Path, dataset_dir: &Path) -> Result<MetricsReport> {
    let state = TrainState::load(cfg, checkpoint)?;
    evaluate_with_state(cfg, &state, dataset_dir)
}

pub fn evaluate_with_state(
    cfg: &ExperimentConfig,
    state: &TrainState,
    dataset_dir: &Path,
) -> Result<MetricsReport> {
    let dataset = read_dataset(dataset_dir)?;
    let mut eval_cfg = cfg.clone();
    eval_cfg.dataset = dataset_dir.to_path_buf();
    let data = prepare(&dataset, &eval_cfg)?;
    if data.pairs.is_empty() {
        return Err(HarnessError::Config("eval dataset has no pairs".into()));
    }
    let mut acc = MetricsAccumulator::new();
    for pair in &data.pairs {
        let out = state.model.forward_pair(
            &data.frames[pair.prev],
            &data.frames[pair.curr],
            pair.warp_points.as_ref(),
        )?;
        let curr = &data.frames[pair.curr];
        let counts = score_frame(&out.probs, &curr.gt, cfg.threshold)?;
        acc.add_frame(&counts, curr.condition.label());
    }
    Ok(acc.report())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.12}"),
        None => "n/a".to_string(),
    }
}

/// Flat `key = value` rendering, deterministic bytes for identical reports.
pub fn report_to_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "frames = {}", report.frames);
    let _ = writeln!(out, "iou = {}", fmt_opt(report.iou));
    let _ = writeln!(out, "precision = {}", fmt_opt(report.precision));
    for (label, value) in DISTANCE_BIN_LABELS.iter().zip(report.iou_by_distance.iter()) {
        let _ = writeln!(out, "iou_{label} = {}", fmt_opt(*value));
    }
    for (cond, value) in &report.iou_by_condition {
        let _ = writeln!(out, "iou_{cond} = {}", fmt_opt(*value));
    }
    for (cond, value) in &report.precision_by_condition {
        let _ = writeln!(out, "precision_{cond} = {}", fmt_opt(*value));
    }
    let _ = writeln!(out, "macro_iou = {}", fmt_opt(report.macro_iou));
    let _ = writeln!(out, "macro_precision = {}", fmt_opt(report.macro_precision));
    out
}

#[derive(Serialize)]
struct ReportJson {
    frames: usize,
    iou: Option<f64>,
    precision: Option<f64>,
    iou_by_distance: Vec<(String, Option<f64>)>,
    iou_by_condition: Vec<(String, Option<f64>)>,
    precision_by_condition: Vec<(String, Option<f64>)>,
    macro_iou: Option<f64>,
    macro_precision: Option<f64>,
}

pub fn report_to_json(report: &MetricsReport) -> String {
    let j = ReportJson {
        frames: report.frames,
        iou: report.iou,
        precision: report.precision,
        iou_by_distance: DISTANCE_BIN_LABELS
            .iter()
            .map(|s| s.to_string())
            .zip(report.iou_by_distance.iter().copied())
            .collect(),
        iou_by_condition: report.iou_by_condition.clone(),
        precision_by_condition: report.precision_by_condition.clone(),
        macro_iou: report.macro_iou,
        macro_precision: report.macro_precision,
    };
    serde_json::to_string_pretty(&j).expect("report serializes")
}

/// Write metrics.txt and metrics.json into the config's out_dir.
pub fn write_report(cfg: &ExperimentConfig, report: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let txt = cfg.out_dir.join("metrics.txt");
    std::fs::write(&txt, report_to_text(report)).map_err(io_err(&txt))?;
    let json = cfg.out_dir.join("metrics.json");
    std::fs::write(&json, report_to_json(report)).map_err(io_err(&json))?;
    Ok(())
}
