//! Ablation sweeps: train and evaluate every combination along the requested
//! axes and emit a sorted table.

use std::fmt::Write as _;
use std::path::Path;

use bevmos_model::fusion::{FusionStrategy, ModalitySet};
use bevmos_model::metrics::MetricsReport;

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};
use crate::eval::evaluate;
use crate::train::train;

#[derive(Debug, Clone)]
pub struct AblationAxes {
    pub modalities: Vec<ModalitySet>,
    pub strategies: Vec<FusionStrategy>,
    pub sweep_counts: Vec<usize>,
}

impl Default for AblationAxes {
    fn default() -> Self {
        AblationAxes {
            modalities: vec![ModalitySet::ALL],
            strategies: vec![FusionStrategy::Concat],
            sweep_counts: vec![5],
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub key: String,
    pub report: MetricsReport,
}

/// Train + evaluate each combination; skips combinations whose plan is
/// invalid (e.g. deformable strategies without their required modalities).
pub fn ablation_matrix(
    base: &ExperimentConfig,
    axes: &AblationAxes,
    eval_dataset: &Path,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for mods in &axes.modalities {
        for strategy in &axes.strategies {
            for &sweeps in &axes.sweep_counts {
                let mut cfg = base.clone();
                cfg.modalities = *mods;
                cfg.fusion = *strategy;
                cfg.sweep_count = sweeps;
                if cfg.fusion_plan().validate().is_err() {
                    continue;
                }
                let key = format!("{} {} s{}", mods.label(), strategy.label(), sweeps);
                let dir_key = key.replace([' ', '+'], "_");
                cfg.out_dir = base.out_dir.join(dir_key);
                let summary = train(&cfg)?;
                let report = evaluate(&cfg, &summary.checkpoint, eval_dataset)?;
                rows.push(AblationRow { key, report });
            }
        }
    }
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}

pub fn table_to_text(rows: &[AblationRow]) -> String {
    let key_w = rows.iter().map(|r| r.key.len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<key_w$}  {:>8}  {:>9}\n", "config", "iou", "precision");
    for row in rows {
        let _ = writeln!(
            out,
            "{:<key_w$}  {:>8}  {:>9}",
            row.key,
            fmt_opt(row.report.iou),
            fmt_opt(row.report.precision),
        );
    }
    out
}

pub fn table_to_json(rows: &[AblationRow]) -> String {
    let entries: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "config": r.key,
                "iou": r.report.iou,
                "precision": r.report.precision,
                "iou_by_distance": r.report.iou_by_distance,
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("table serializes")
}

pub fn write_table(out_dir: &Path, rows: &[AblationRow]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let txt = out_dir.join("ablation.txt");
    std::fs::write(&txt, table_to_text(rows)).map_err(io_err(&txt))?;
    let json = out_dir.join("ablation.json");
    std::fs::write(&json, table_to_json(rows)).map_err(io_err(&json))?;
    Ok(())
}
