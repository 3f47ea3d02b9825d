//! Full two-frame pipeline: per-sensor encoders -> fusion -> ego-warp of the
//! previous frame -> correlation -> motion features -> decoder. The two
//! frame passes share weights.
//!
//! Geometry and raw sensor maps never change across training iterations, so
//! frames are "prepared" once: input tensors, lift caches, voxelized maps,
//! and ground truth all precomputed; only the learned passes rerun.

use std::path::Path;

use bevmos_model::correlation::{correlate, motion_features, CorrelationCfg};
use bevmos_model::encoders::{
    lift_to_bev, rasterize_radar, voxelize_lidar, CameraNeck, ImageBackbone, LiftCache,
    BackboneCfg, RADAR_CHANNELS,
};
use bevmos_model::fusion::{FusionModule, FusionPlan};
use bevmos_model::geometry::{warp_bev_with_points, warp_sample_points, BevGrid, EgoPose};
use bevmos_model::head::{bce_loss, Decoder, SegmentationOutput};
use bevmos_model::metrics::{boxes_to_mask, GtMask};
use bevmos_tensor::{read_records, write_records, Adam, AdamConfig, CounterRng, ParamSet, Tensor};
use bevmos_synth::{Condition, Dataset};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Immutable per-frame inputs, precomputed once per dataset load.
pub struct PreparedFrame {
    pub images: Vec<Tensor>,
    pub lift: Option<LiftCache>,
    pub lidar_map: Option<Tensor>,
    pub radar_map: Option<Tensor>,
    pub gt: GtMask,
    pub condition: Condition,
    pub pose: EgoPose,
}

/// A consecutive-frame training/eval sample.
pub struct PreparedPair {
    pub prev: usize,
    pub curr: usize,
    /// bilinear sample positions aligning the previous map to the current
    /// grid; None disables ego-motion compensation
    pub warp_points: Option<Tensor>,
}

pub struct PreparedData {
    pub frames: Vec<PreparedFrame>,
    pub pairs: Vec<PreparedPair>,
}

/// Precompute everything static for the configured grid and modalities.
pub fn prepare(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<PreparedData> {
    let grid = cfg.grid()?;
    let mods = cfg.modalities;
    let mut frames = Vec::with_capacity(dataset.frames.len());
    for frame in &dataset.frames {
        let sweeps = cfg.sweep_count;
        if mods.lidar && frame.lidar.len() < sweeps {
            return Err(HarnessError::Config(format!(
                "dataset frame has {} lidar sweeps, config wants {sweeps}",
                frame.lidar.len()
            )));
        }
        if mods.radar && frame.radar.len() < sweeps {
            return Err(HarnessError::Config(format!(
                "dataset frame has {} radar sweeps, config wants {sweeps}",
                frame.radar.len()
            )));
        }
        let lift = if mods.camera {
            let scaled: Vec<_> = frame.cameras.calibs.iter().map(|c| c.scaled(8.0)).collect();
            Some(LiftCache::build(&grid, &scaled))
        } else {
            None
        };
        let lidar_map = if mods.lidar {
            Some(voxelize_lidar(&frame.lidar[..sweeps], &grid)?)
        } else {
            None
        };
        let radar_map = if mods.radar {
            Some(rasterize_radar(&frame.radar[..sweeps], &grid)?)
        } else {
            None
        };
        frames.push(PreparedFrame {
            images: if mods.camera { frame.cameras.images.clone() } else { Vec::new() },
            lift,
            lidar_map,
            radar_map,
            gt: boxes_to_mask(&frame.boxes, &grid),
            condition: frame.condition,
            pose: frame.ego.clone(),
        });
    }

    let pairs = dataset
        .pairs()
        .into_iter()
        .map(|(prev, curr)| {
            let warp_points = cfg.ego_warp.then(|| {
                warp_sample_points(
                    &dataset.frames[prev].ego,
                    &dataset.frames[curr].ego,
                    &grid,
                )
            });
            PreparedPair {
                prev,
                curr,
                warp_points,
            }
        })
        .collect();

    Ok(PreparedData { frames, pairs })
}

/// The learned network. Construction is deterministic in the config seed.
pub struct BevMosModel {
    pub grid: BevGrid,
    pub plan: FusionPlan,
    pub corr_cfg: CorrelationCfg,
    backbone: Option<ImageBackbone>,
    neck: Option<CameraNeck>,
    fusion: FusionModule,
    decoder: Decoder,
    params: ParamSet,
}

impl BevMosModel {
    pub fn new(cfg: &ExperimentConfig) -> Result<BevMosModel> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let plan = cfg.fusion_plan();
        let corr_cfg = cfg.correlation();
        let mut rng = CounterRng::new(cfg.seed).derive(0xb0de);

        let (backbone, neck, cam_channels) = if plan.modalities.camera {
            let bb = ImageBackbone::new(
                "backbone",
                BackboneCfg {
                    stage_channels: cfg.backbone_channels,
                },
                &mut rng,
            );
            let (c2, c3) = bb.feat_channels();
            let neck = CameraNeck::new("neck", c2, c3, cfg.neck_channels, &mut rng);
            (Some(bb), Some(neck), cfg.neck_channels * grid.ny)
        } else {
            (None, None, 0)
        };
        let radar_channels = if plan.modalities.radar { RADAR_CHANNELS } else { 0 };
        let lidar_channels = if plan.modalities.lidar { grid.ny } else { 0 };

        let fusion = FusionModule::new(
            "fusion",
            plan.clone(),
            cam_channels,
            radar_channels,
            lidar_channels,
            &mut rng,
        )?;
        let decoder = Decoder::new(
            "decoder",
            corr_cfg.channels() + cfg.model_dim,
            cfg.decode_hidden,
            &mut rng,
        );

        let mut params = ParamSet::new();
        if let Some(bb) = &backbone {
            bb.collect(&mut params)?;
        }
        if let Some(n) = &neck {
            n.collect(&mut params)?;
        }
        fusion.collect(&mut params)?;
        decoder.collect(&mut params)?;

        Ok(BevMosModel {
            grid,
            plan,
            corr_cfg,
            backbone,
            neck,
            fusion,
            decoder,
            params,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    /// One frame through the encoders and fusion: the fused BEV map.
    pub fn fused_map(&self, frame: &PreparedFrame) -> Result<Tensor> {
        let cam_map = match (&self.backbone, &self.neck, &frame.lift) {
            (Some(bb), Some(neck), Some(lift)) => {
                let mut feats = Vec::with_capacity(frame.images.len());
                for img in &frame.images {
                    let (f2, f3) = bb.forward(img)?;
                    feats.push(neck.forward(&f2, &f3)?);
                }
                Some(lift_to_bev(&feats, lift, &self.grid)?)
            }
            _ => None,
        };
        Ok(self.fusion.forward(
            cam_map.as_ref(),
            frame.radar_map.as_ref(),
            frame.lidar_map.as_ref(),
        )?)
    }

    /// Full two-frame forward pass with shared weights.
    pub fn forward_pair(
        &self,
        prev: &PreparedFrame,
        curr: &PreparedFrame,
        warp_points: Option<&Tensor>,
    ) -> Result<SegmentationOutput> {
        let fused_prev = self.fused_map(prev)?;
        let fused_curr = self.fused_map(curr)?;
        let aligned_prev = match warp_points {
            Some(pts) => warp_bev_with_points(&fused_prev, pts, &self.grid)?,
            None => fused_prev,
        };
        let corr = correlate(&fused_curr, &aligned_prev, &self.corr_cfg)?;
        let motion = motion_features(&corr, &fused_curr)?;
        Ok(self.decoder.forward(&motion)?)
    }

    /// Loss of one pair against the current frame's ground truth.
    pub fn pair_loss(
        &self,
        prev: &PreparedFrame,
        curr: &PreparedFrame,
        warp_points: Option<&Tensor>,
    ) -> Result<Tensor> {
        let out = self.forward_pair(prev, curr, warp_points)?;
        Ok(bce_loss(&out.probs, &curr.gt)?)
    }
}

/// Optimizer state + iteration counter, checkpointable bit-exactly.
pub struct TrainState {
    pub model: BevMosModel,
    pub optimizer: Adam,
    pub iteration: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn new(cfg: &ExperimentConfig) -> Result<TrainState> {
        let model = BevMosModel::new(cfg)?;
        let optimizer = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                weight_decay: cfg.weight_decay,
                ..AdamConfig::default()
            },
            model.params().as_slice(),
        );
        Ok(TrainState {
            model,
            optimizer,
            iteration: 0,
            seed: cfg.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        records.push((
            "trainstate.iteration".into(),
            vec![1],
            vec![self.iteration as f64],
        ));
        records.push((
            "trainstate.adam_steps".into(),
            vec![1],
            vec![self.optimizer.step_count() as f64],
        ));
        records.push((
            "trainstate.seed".into(),
            vec![2],
            vec![(self.seed >> 32) as f64, (self.seed & 0xffff_ffff) as f64],
        ));
        let (m, v) = self.optimizer.moments();
        for (i, p) in self.model.params().iter().enumerate() {
            records.push((p.name.clone(), p.tensor.shape().to_vec(), p.tensor.to_vec()));
            records.push((
                format!("adam.m.{}", p.name),
                p.tensor.shape().to_vec(),
                m[i].clone(),
            ));
            records.push((
                format!("adam.v.{}", p.name),
                p.tensor.shape().to_vec(),
                v[i].clone(),
            ));
        }
        write_records(path, &records)?;
        Ok(())
    }

    /// Load parameters + optimizer moments into a freshly built model,
    /// validating every shape against the constructed architecture.
    pub fn load(cfg: &ExperimentConfig, path: &Path) -> Result<TrainState> {
        let mut state = TrainState::new(cfg)?;
        state.restore(path)?;
        Ok(state)
    }

    pub fn restore(&mut self, path: &Path) -> Result<()> {
        let records = read_records(path)?;
        let find = |name: &str| -> Result<&bevmos_tensor::Record> {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| HarnessError::CheckpointMismatch {
                    name: name.to_string(),
                    message: "missing from checkpoint".into(),
                })
        };
        let iteration = find("trainstate.iteration")?.data[0] as usize;
        let adam_steps = find("trainstate.adam_steps")?.data[0] as u64;
        let seed_rec = find("trainstate.seed")?;
        let seed = ((seed_rec.data[0] as u64) << 32) | (seed_rec.data[1] as u64);

        let mut m = Vec::with_capacity(self.model.params().len());
        let mut v = Vec::with_capacity(self.model.params().len());
        for p in self.model.params().iter() {
            let rec = find(&p.name)?;
            if rec.shape != p.tensor.shape() {
                return Err(HarnessError::CheckpointMismatch {
                    name: p.name.clone(),
                    message: format!(
                        "checkpoint shape {:?} vs model shape {:?}",
                        rec.shape,
                        p.tensor.shape()
                    ),
                });
            }
            p.tensor.set_data(&rec.data)?;
            m.push(find(&format!("adam.m.{}", p.name))?.data.clone());
            v.push(find(&format!("adam.v.{}", p.name))?.data.clone());
        }
        self.optimizer.restore(adam_steps, m, v)?;
        self.iteration = iteration;
        self.seed = seed;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn micro_config(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 3;
        cfg.grid_nx = 10;
        cfg.grid_ny = 2;
        cfg.grid_nz = 10;
        cfg.backbone_channels = [4, 4, 6, 8];
        cfg.neck_channels = 4;
        cfg.model_dim = 8;
        cfg.decode_hidden = 4;
        cfg.heads = 2;
        cfg.points_per_head = 2;
        cfg.corr_k = 1;
        cfg.corr_d = 1;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("bevmos_ckpt_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = micro_config(&dir);
        let state = TrainState::new(&cfg).unwrap();
        let path = dir.join("state.bmos");
        state.save(&path).unwrap();
        let restored = TrainState::load(&cfg, &path).unwrap();
        for (a, b) in state.model.params().iter().zip(restored.model.params().iter()) {
            assert_eq!(a.name, b.name);
            let (av, bv) = (a.tensor.to_vec(), b.tensor.to_vec());
            for (x, y) in av.iter().zip(bv.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_shape_mismatch_is_structured() {
        let dir = std::env::temp_dir().join("bevmos_ckpt_mismatch");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = micro_config(&dir);
        let state = TrainState::new(&cfg).unwrap();
        let path = dir.join("state.bmos");
        state.save(&path).unwrap();
        let mut other = cfg.clone();
        other.model_dim = 16;
        let err = match TrainState::load(&other, &path) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("shape mismatch not detected"),
        };
        assert!(err.contains("shape"), "{err}");
    }
}
