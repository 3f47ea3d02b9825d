//! Ground-truth masks, IoU / precision scoring, and distance-binned
//! aggregation.
//!
//! Dataset-level numbers are micro-averaged: TP/FP/FN counts pool across
//! frames before the final division. A per-frame macro average is reported
//! alongside for comparison. Distance bins are half-open [lo, hi) over the
//! metric distance of each cell center from the ego origin.

use bevmos_tensor::Tensor;

use crate::error::{ModelError, Result};
use crate::geometry::BevGrid;

/// Distance bin edges in meters: [0, 20), [20, 35), [35, 50).
pub const DISTANCE_BINS: [(f64, f64); 3] = [(0.0, 20.0), (20.0, 35.0), (35.0, 50.0)];
pub const DISTANCE_BIN_LABELS: [&str; 3] = ["0-20m", "20-35m", "35-50m"];

/// Oriented box on the ground plane with a moving flag. `yaw` rotates the
/// length axis from +Z toward +X; footprint is length along heading, width
/// across.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleBox {
    pub center: [f64; 3],
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub moving: bool,
    /// ground-plane velocity (vx, vz) in the same frame as `center`
    pub velocity: [f64; 2],
}

impl ObstacleBox {
    /// Half-open point-in-footprint test: along-axis and across-axis local
    /// coordinates in [-extent/2, extent/2). The half-open edges make
    /// boundary cells deterministic.
    pub fn footprint_contains(&self, x: f64, z: f64) -> bool {
        let dx = x - self.center[0];
        let dz = z - self.center[2];
        let (s, c) = self.yaw.sin_cos();
        // heading (length) axis: (sin yaw, cos yaw); across axis: (cos yaw, -sin yaw)
        let along = dx * s + dz * c;
        let across = dx * c - dz * s;
        along >= -self.length / 2.0
            && along < self.length / 2.0
            && across >= -self.width / 2.0
            && across < self.width / 2.0
    }

    pub fn speed(&self) -> f64 {
        (self.velocity[0] * self.velocity[0] + self.velocity[1] * self.velocity[1]).sqrt()
    }
}

/// Binary moving-object mask over the BEV grid, with per-cell distances.
#[derive(Debug, Clone)]
pub struct GtMask {
    pub mask: Vec<f64>,          // nx * nz, values 0.0 / 1.0
    pub cell_distance_m: Vec<f64>, // metric distance of each cell center
    pub nx: usize,
    pub nz: usize,
}

impl GtMask {
    pub fn from_mask(mask: Vec<f64>, grid: &BevGrid) -> GtMask {
        assert_eq!(mask.len(), grid.num_cells());
        GtMask {
            mask,
            cell_distance_m: grid.cell_distances(),
            nx: grid.nx,
            nz: grid.nz,
        }
    }

    pub fn positives(&self) -> usize {
        self.mask.iter().filter(|v| **v != 0.0).count()
    }
}

/// Rasterize moving-flagged boxes into a binary BEV mask. Cells whose
/// centers fall inside the ground-plane footprint of any moving box are 1;
/// static and out-of-grid boxes are ignored, degenerate boxes are skipped
/// with a warning.
pub fn boxes_to_mask(boxes: &[ObstacleBox], grid: &BevGrid) -> GtMask {
    let mut mask = vec![0.0; grid.num_cells()];
    for (i, b) in boxes.iter().enumerate() {
        if !b.moving {
            continue;
        }
        if b.length <= 0.0 || b.width <= 0.0 {
            eprintln!("boxes_to_mask: skipping degenerate box {i} ({}x{})", b.length, b.width);
            continue;
        }
        // bound the cell scan to the box's disc
        let radius = 0.5 * (b.length * b.length + b.width * b.width).sqrt();
        let ix_lo = (((b.center[0] - radius) - grid.x_min) / grid.cell_x()).floor().max(0.0) as usize;
        let ix_hi = ((((b.center[0] + radius) - grid.x_min) / grid.cell_x()).ceil() as usize).min(grid.nx);
        let iz_lo = (((b.center[2] - radius) - grid.z_min) / grid.cell_z()).floor().max(0.0) as usize;
        let iz_hi = ((((b.center[2] + radius) - grid.z_min) / grid.cell_z()).ceil() as usize).min(grid.nz);
        for ix in ix_lo..ix_hi {
            let x = grid.x_min + (ix as f64 + 0.5) * grid.cell_x();
            for iz in iz_lo..iz_hi {
                let z = grid.z_min + (iz as f64 + 0.5) * grid.cell_z();
                if b.footprint_contains(x, z) {
                    mask[ix * grid.nz + iz] = 1.0;
                }
            }
        }
    }
    GtMask::from_mask(mask, grid)
}

/// Mergeable TP/FP/FN counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl BinCounts {
    pub fn merge(&mut self, other: &BinCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// None when the bin saw no predicted or actual positives.
    pub fn iou(&self) -> Option<f64> {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(self.tp as f64 / denom as f64)
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        if denom == 0 {
            None
        } else {
            Some(self.tp as f64 / denom as f64)
        }
    }
}

/// Counts for one frame: overall plus per distance bin.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrameCounts {
    pub overall: BinCounts,
    pub per_bin: [BinCounts; 3],
}

impl FrameCounts {
    pub fn merge(&mut self, other: &FrameCounts) {
        self.overall.merge(&other.overall);
        for (a, b) in self.per_bin.iter_mut().zip(other.per_bin.iter()) {
            a.merge(b);
        }
    }
}

/// Bin index of a metric distance, or None outside all bins.
pub fn distance_bin(distance_m: f64) -> Option<usize> {
    DISTANCE_BINS
        .iter()
        .position(|(lo, hi)| distance_m >= *lo && distance_m < *hi)
}

/// Binarize at `threshold` (strictly greater) and count TP/FP/FN overall and
/// per distance bin.
pub fn score_frame(probs: &Tensor, gt: &GtMask, threshold: f64) -> Result<FrameCounts> {
    if probs.numel() != gt.mask.len() {
        return Err(ModelError::Shape {
            op: "score_frame",
            message: format!("{} probs vs {} cells", probs.numel(), gt.mask.len()),
        });
    }
    let mut counts = FrameCounts::default();
    let pv = probs.data();
    for i in 0..gt.mask.len() {
        let pred = pv[i] > threshold;
        let actual = gt.mask[i] != 0.0;
        if !pred && !actual {
            continue;
        }
        let bin = distance_bin(gt.cell_distance_m[i]);
        let bump = |c: &mut BinCounts| {
            if pred && actual {
                c.tp += 1;
            } else if pred {
                c.fp += 1;
            } else {
                c.fn_ += 1;
            }
        };
        bump(&mut counts.overall);
        if let Some(b) = bin {
            bump(&mut counts.per_bin[b]);
        }
    }
    Ok(counts)
}

/// IoU / precision report: micro-averaged totals, distance bins, per-condition
/// breakdown, and the per-frame macro average for comparison.
#[derive(Debug, Clone, Default)]
pub struct MetricsReport {
    pub iou: Option<f64>,
    pub precision: Option<f64>,
    pub iou_by_distance: [Option<f64>; 3],
    pub iou_by_condition: Vec<(String, Option<f64>)>,
    pub precision_by_condition: Vec<(String, Option<f64>)>,
    pub macro_iou: Option<f64>,
    pub macro_precision: Option<f64>,
    pub frames: usize,
}

/// Accumulates frame scores into a MetricsReport.
#[derive(Default)]
pub struct MetricsAccumulator {
    total: FrameCounts,
    by_condition: Vec<(String, BinCounts)>,
    macro_iou_sum: f64,
    macro_iou_n: usize,
    macro_prec_sum: f64,
    macro_prec_n: usize,
    frames: usize,
}

impl MetricsAccumulator {
    pub fn new() -> MetricsAccumulator {
        MetricsAccumulator::default()
    }

    pub fn add_frame(&mut self, counts: &FrameCounts, condition: &str) {
        self.total.merge(counts);
        match self.by_condition.iter_mut().find(|(c, _)| c == condition) {
            Some((_, acc)) => acc.merge(&counts.overall),
            None => {
                let mut acc = BinCounts::default();
                acc.merge(&counts.overall);
                self.by_condition.push((condition.to_string(), acc));
            }
        }
        if let Some(iou) = counts.overall.iou() {
            self.macro_iou_sum += iou;
            self.macro_iou_n += 1;
        }
        if let Some(p) = counts.overall.precision() {
            self.macro_prec_sum += p;
            self.macro_prec_n += 1;
        }
        self.frames += 1;
    }

    pub fn report(&self) -> MetricsReport {
        let mut by_condition = self.by_condition.clone();
        by_condition.sort_by(|a, b| a.0.cmp(&b.0));
        MetricsReport {
            iou: self.total.overall.iou(),
            precision: self.total.overall.precision(),
            iou_by_distance: [
                self.total.per_bin[0].iou(),
                self.total.per_bin[1].iou(),
                self.total.per_bin[2].iou(),
            ],
            iou_by_condition: by_condition
                .iter()
                .map(|(c, b)| (c.clone(), b.iou()))
                .collect(),
            precision_by_condition: by_condition
                .iter()
                .map(|(c, b)| (c.clone(), b.precision()))
                .collect(),
            macro_iou: if self.macro_iou_n > 0 {
                Some(self.macro_iou_sum / self.macro_iou_n as f64)
            } else {
                None
            },
            macro_precision: if self.macro_prec_n > 0 {
                Some(self.macro_prec_sum / self.macro_prec_n as f64)
            } else {
                None
            },
            frames: self.frames,
        }
    }
}

/// Single-frame convenience wrapper: binarize, count, report.
pub fn compute_metrics(probs: &Tensor, gt: &GtMask, threshold: f64) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new();
    acc.add_frame(&score_frame(probs, gt, threshold)?, "all");
    Ok(acc.report())
}
