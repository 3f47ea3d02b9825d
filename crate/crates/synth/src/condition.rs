//! Weather / illumination degradation applied to generated frames.

use bevmos_model::encoders::{CameraBundle, LidarSweep};
use bevmos_tensor::{CounterRng, Tensor};

use crate::{Condition, Result, SceneFrame};

#[derive(Debug, Clone, Copy)]
pub struct ConditionParams {
    /// night: multiplicative image gain
    pub night_gain: f64,
    /// night: additive gaussian sensor noise sigma
    pub night_noise: f64,
    /// rain: contrast compression toward 0.5
    pub rain_contrast: f64,
    /// rain: multiplicative speckle sigma
    pub rain_speckle: f64,
    /// rain: LiDAR point drop probability
    pub rain_drop_rate: f64,
    /// rain: LiDAR per-axis jitter sigma (meters)
    pub rain_jitter_m: f64,
}

impl Default for ConditionParams {
    fn default() -> Self {
        ConditionParams {
            night_gain: 0.15,
            night_noise: 0.02,
            rain_contrast: 0.55,
            rain_speckle: 0.18,
            rain_drop_rate: 0.2,
            rain_jitter_m: 0.05,
        }
    }
}

/// Apply a condition with default parameters. Day is the identity.
pub fn apply_condition(frame: &SceneFrame, condition: Condition) -> Result<SceneFrame> {
    apply_condition_with(frame, condition, &ConditionParams::default())
}

pub fn apply_condition_with(
    frame: &SceneFrame,
    condition: Condition,
    params: &ConditionParams,
) -> Result<SceneFrame> {
    let mut rng = CounterRng::new(frame.noise_seed).derive(match condition {
        Condition::Day => 0,
        Condition::Night => 1,
        Condition::Rain => 2,
    });

    let images = match condition {
        Condition::Day => frame.cameras.images.clone(),
        Condition::Night => frame
            .cameras
            .images
            .iter()
            .map(|img| {
                let data: Vec<f64> = img
                    .data()
                    .iter()
                    .map(|v| {
                        (v * params.night_gain + params.night_noise * rng.normal()).clamp(0.0, 1.0)
                    })
                    .collect();
                Tensor::from_vec(img.shape(), data)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
        Condition::Rain => frame
            .cameras
            .images
            .iter()
            .map(|img| {
                let data: Vec<f64> = img
                    .data()
                    .iter()
                    .map(|v| {
                        let compressed = 0.5 + (v - 0.5) * params.rain_contrast;
                        (compressed * (1.0 + params.rain_speckle * rng.normal())).clamp(0.0, 1.0)
                    })
                    .collect();
                Tensor::from_vec(img.shape(), data)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?,
    };

    let lidar = match condition {
        Condition::Day | Condition::Night => frame.lidar.clone(),
        Condition::Rain => frame
            .lidar
            .iter()
            .map(|sweep| {
                let pts = sweep.points.data();
                let mut kept = Vec::new();
                for p in pts.chunks_exact(3) {
                    if rng.uniform() < params.rain_drop_rate {
                        continue;
                    }
                    kept.push(p[0] + params.rain_jitter_m * rng.normal());
                    kept.push(p[1] + params.rain_jitter_m * rng.normal());
                    kept.push(p[2] + params.rain_jitter_m * rng.normal());
                }
                let n = kept.len() / 3;
                Ok(LidarSweep {
                    points: Tensor::from_vec(&[n, 3], kept)?,
                    sweep_index: sweep.sweep_index,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };

    Ok(SceneFrame {
        cameras: CameraBundle::new(images, frame.cameras.calibs.clone())?,
        lidar,
        radar: frame.radar.clone(), // radar is weather-robust
        ego: frame.ego.clone(),
        boxes: frame.boxes.clone(),
        condition,
        noise_seed: frame.noise_seed,
    })
}
