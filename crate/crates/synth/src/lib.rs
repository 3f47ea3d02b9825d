//! Deterministic synthetic multimodal driving scenes.
//!
//! A scene is a handful of boxes on a textured ground plane, some moving with
//! constant velocity, observed by a camera rig, a LiDAR, and a radar mounted
//! on an ego vehicle following a smooth trajectory. Everything derives from a
//! single seed through counter-based RNG streams, so identical specs produce
//! byte-identical datasets. Night and rain variants degrade the sensors the
//! way the real conditions do: darkness and noise for the cameras, dropout
//! and jitter for the LiDAR, nothing for the radar.

mod condition;
mod dataset;
pub mod render;
mod sample;
mod scene;

use bevmos_model::encoders::{CameraBundle, LidarSweep, RadarSweep};
use bevmos_model::geometry::EgoPose;
use bevmos_model::metrics::ObstacleBox;
use thiserror::Error;

pub use condition::{apply_condition, apply_condition_with, ConditionParams};
pub use dataset::{read_dataset, write_dataset, Dataset};
pub use render::render_camera;
pub use sample::box_surface_contains;
pub use scene::{ego_pose_at, ego_position, ego_yaw, generate, generate_scene, world_box_at, FRAME_PERIOD_S, SWEEPS_PER_FRAME, SWEEP_PERIOD_S};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] bevmos_model::ModelError),
    #[error(transparent)]
    Tensor(#[from] bevmos_tensor::TensorError),
    #[error("invalid scene spec: {0}")]
    BadSpec(String),
    #[error("could not place {placed} of {requested} boxes without overlap")]
    Unplaceable { placed: usize, requested: usize },
    #[error("dataset error in `{context}`: {message}")]
    Dataset { context: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Day,
    Night,
    Rain,
}

impl Condition {
    pub fn label(&self) -> &'static str {
        match self {
            Condition::Day => "day",
            Condition::Night => "night",
            Condition::Rain => "rain",
        }
    }

    pub fn parse(s: &str) -> Result<Condition> {
        match s {
            "day" => Ok(Condition::Day),
            "night" => Ok(Condition::Night),
            "rain" => Ok(Condition::Rain),
            other => Err(SynthError::BadSpec(format!("unknown condition `{other}`"))),
        }
    }
}

/// Everything needed to generate one scene deterministically.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_frames: usize,
    pub num_boxes: usize,
    pub moving_fraction: f64,
    pub ego_speed_mps: f64,
    pub condition: Condition,
    pub num_cams: usize,
    /// (height, width); both divisible by 16
    pub image_size: (usize, usize),
    pub lidar_points_per_box: usize,
    pub radar_points_per_box: usize,
    /// LiDAR ground-clutter points per sweep
    pub ground_points_per_sweep: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            num_frames: 10,
            num_boxes: 12,
            moving_fraction: 0.6,
            ego_speed_mps: 4.0,
            condition: Condition::Day,
            num_cams: 2,
            image_size: (32, 64),
            lidar_points_per_box: 6,
            radar_points_per_box: 2,
            ground_points_per_sweep: 60,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(SynthError::BadSpec("num_frames must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.moving_fraction) {
            return Err(SynthError::BadSpec(format!(
                "moving_fraction {} outside [0, 1]",
                self.moving_fraction
            )));
        }
        if self.num_cams == 0 {
            return Err(SynthError::BadSpec("need at least one camera".into()));
        }
        if self.image_size.0 % 16 != 0 || self.image_size.1 % 16 != 0 || self.image_size.0 == 0 {
            return Err(SynthError::BadSpec(format!(
                "image size {:?} must be divisible by 16",
                self.image_size
            )));
        }
        Ok(())
    }
}

/// A box's world-frame kinematics: constant-velocity ground motion.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldBox {
    pub center0: [f64; 3],
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub moving: bool,
    pub velocity: [f64; 2], // world (vx, vz)
    pub color: [f64; 3],
    pub rcs: f64,
}

/// One timestamped multimodal sample with ground truth.
pub struct SceneFrame {
    pub cameras: CameraBundle,
    pub lidar: Vec<LidarSweep>,
    pub radar: Vec<RadarSweep>,
    pub ego: EgoPose,
    /// ground-truth boxes in this frame's reference frame
    pub boxes: Vec<ObstacleBox>,
    pub condition: Condition,
    /// stream id for condition noise, fixed at generation time
    pub noise_seed: u64,
}

/// A generated scene: the closed-form world description plus its frames.
pub struct Scene {
    pub spec: SceneSpec,
    pub world_boxes: Vec<WorldBox>,
    pub frames: Vec<SceneFrame>,
}
