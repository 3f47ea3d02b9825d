//! Experiment configuration: a flat `key = value` text file with every knob
//! of the pipeline. Unknown keys are rejected; CLI `--set key=value`
//! overrides take precedence over the file, which takes precedence over the
//! defaults.

use std::path::{Path, PathBuf};

use bevmos_model::correlation::CorrelationCfg;
use bevmos_model::fusion::{FusionPlan, FusionStrategy, ModalitySet};
use bevmos_model::geometry::BevGrid;

use crate::error::{io_err, HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,

    // BEV grid: square [-extent, extent] x/z footprint
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub grid_nz: usize,
    pub grid_extent_m: f64,
    pub grid_y_min: f64,
    pub grid_y_max: f64,

    // model widths
    pub backbone_channels: [usize; 4],
    pub neck_channels: usize,
    pub model_dim: usize,
    pub decode_hidden: usize,

    // fusion
    pub modalities: ModalitySet,
    pub fusion: FusionStrategy,
    pub heads: usize,
    pub points_per_head: usize,

    // temporal correlation
    pub corr_k: usize,
    pub corr_d: usize,
    pub corr_stride: usize,
    pub ego_warp: bool,

    // sweep aggregation (1 | 3 | 5)
    pub sweep_count: usize,

    // optimization
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub checkpoint_every: usize,

    // evaluation
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: 100 x 4 x 100 grid at 1 m cells, model dim 64.
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            dataset: PathBuf::from("data"),
            out_dir: PathBuf::from("runs/default"),
            grid_nx: 100,
            grid_ny: 4,
            grid_nz: 100,
            grid_extent_m: 50.0,
            grid_y_min: -1.5,
            grid_y_max: 8.5,
            backbone_channels: [16, 32, 64, 128],
            neck_channels: 16,
            model_dim: 64,
            decode_hidden: 32,
            modalities: ModalitySet::ALL,
            fusion: FusionStrategy::Concat,
            heads: 4,
            points_per_head: 4,
            corr_k: 3,
            corr_d: 4,
            corr_stride: 1,
            ego_warp: true,
            sweep_count: 5,
            lr: 3e-4,
            weight_decay: 1e-7,
            batch_size: 4,
            iterations: 2000,
            checkpoint_every: 500,
            threshold: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<BevGrid> {
        Ok(BevGrid::new(
            (-self.grid_extent_m, self.grid_extent_m),
            (self.grid_y_min, self.grid_y_max),
            (-self.grid_extent_m, self.grid_extent_m),
            self.grid_nx,
            self.grid_ny,
            self.grid_nz,
        )?)
    }

    pub fn fusion_plan(&self) -> FusionPlan {
        FusionPlan {
            modalities: self.modalities,
            strategy: self.fusion,
            heads: self.heads,
            points_per_head: self.points_per_head,
            model_dim: self.model_dim,
        }
    }

    pub fn correlation(&self) -> CorrelationCfg {
        CorrelationCfg {
            k: self.corr_k,
            d: self.corr_d,
            stride_disp: self.corr_stride,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.fusion_plan().validate()?;
        self.correlation().validate()?;
        if ![1, 3, 5].contains(&self.sweep_count) {
            return Err(HarnessError::Config(format!(
                "sweep_count must be 1, 3, or 5 (got {})",
                self.sweep_count
            )));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(HarnessError::Config(
                "batch_size and iterations must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.threshold) || self.threshold <= 0.0 {
            return Err(HarnessError::Config(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::ConfigParse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| HarnessError::ConfigParse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    /// Apply `key=value` overrides (CLI `--set`).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("override `{item}` is not key=value"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse::<T>()
                .map_err(|_| HarnessError::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "dataset" => self.dataset = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "grid_nx" => self.grid_nx = parse(key, value)?,
            "grid_ny" => self.grid_ny = parse(key, value)?,
            "grid_nz" => self.grid_nz = parse(key, value)?,
            "grid_extent_m" => self.grid_extent_m = parse(key, value)?,
            "grid_y_min" => self.grid_y_min = parse(key, value)?,
            "grid_y_max" => self.grid_y_max = parse(key, value)?,
            "backbone_channels" => {
                let parts: Vec<usize> = value
                    .split(',')
                    .map(|p| parse::<usize>(key, p.trim()))
                    .collect::<Result<_>>()?;
                if parts.len() != 4 {
                    return Err(HarnessError::Config(format!(
                        "backbone_channels needs 4 entries, got {}",
                        parts.len()
                    )));
                }
                self.backbone_channels = [parts[0], parts[1], parts[2], parts[3]];
            }
            "neck_channels" => self.neck_channels = parse(key, value)?,
            "model_dim" => self.model_dim = parse(key, value)?,
            "decode_hidden" => self.decode_hidden = parse(key, value)?,
            "modalities" => self.modalities = parse_modalities(value)?,
            "fusion" => self.fusion = FusionStrategy::parse(value)?,
            "heads" => self.heads = parse(key, value)?,
            "points_per_head" => self.points_per_head = parse(key, value)?,
            "corr_k" => self.corr_k = parse(key, value)?,
            "corr_d" => self.corr_d = parse(key, value)?,
            "corr_stride" => self.corr_stride = parse(key, value)?,
            "ego_warp" => self.ego_warp = parse(key, value)?,
            "sweep_count" => self.sweep_count = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            other => {
                return Err(HarnessError::Config(format!("unknown config key `{other}`")))
            }
        }
        Ok(())
    }

    /// Serialize as the same flat text the loader accepts (lossless).
    pub fn to_text(&self) -> String {
        let m = &self.modalities;
        let mods = [
            (m.camera, "camera"),
            (m.radar, "radar"),
            (m.lidar, "lidar"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect::<Vec<_>>()
        .join(",");
        format!(
            "seed = {}\ndataset = {}\nout_dir = {}\n\
             grid_nx = {}\ngrid_ny = {}\ngrid_nz = {}\ngrid_extent_m = {}\n\
             grid_y_min = {}\ngrid_y_max = {}\n\
             backbone_channels = {},{},{},{}\nneck_channels = {}\nmodel_dim = {}\ndecode_hidden = {}\n\
             modalities = {}\nfusion = {}\nheads = {}\npoints_per_head = {}\n\
             corr_k = {}\ncorr_d = {}\ncorr_stride = {}\nego_warp = {}\nsweep_count = {}\n\
             lr = {}\nweight_decay = {}\nbatch_size = {}\niterations = {}\ncheckpoint_every = {}\n\
             threshold = {}\n",
            self.seed,
            self.dataset.display(),
            self.out_dir.display(),
            self.grid_nx,
            self.grid_ny,
            self.grid_nz,
            self.grid_extent_m,
            self.grid_y_min,
            self.grid_y_max,
            self.backbone_channels[0],
            self.backbone_channels[1],
            self.backbone_channels[2],
            self.backbone_channels[3],
            self.neck_channels,
            self.model_dim,
            self.decode_hidden,
            mods,
            self.fusion.label(),
            self.heads,
            self.points_per_head,
            self.corr_k,
            self.corr_d,
            self.corr_stride,
            self.ego_warp,
            self.sweep_count,
            self.lr,
            self.weight_decay,
            self.batch_size,
            self.iterations,
            self.checkpoint_every,
            self.threshold,
        )
    }
}

pub fn parse_modalities(value: &str) -> Result<ModalitySet> {
    let mut set = ModalitySet {
        camera: false,
        radar: false,
        lidar: false,
    };
    for part in value.split([',', '+']) {
        match part.trim().to_ascii_lowercase().as_str() {
            "camera" | "c" => set.camera = true,
            "radar" | "r" => set.radar = true,
            "lidar" | "l" => set.lidar = true,
            "" => {}
            other => {
                return Err(HarnessError::Config(format!("unknown modality `{other}`")))
            }
        }
    }
    Ok(set)
}
