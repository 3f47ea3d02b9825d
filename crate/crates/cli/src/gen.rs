//! Dataset generation: a set of scenes with a deterministic condition mix.

use std::path::Path;

use bevmos_synth::{generate, write_dataset, Condition, Scene, SceneSpec};
use bevmos_tensor::CounterRng;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub seed: u64,
    pub scenes: usize,
    pub frames_per_scene: usize,
    pub boxes: usize,
    pub moving_fraction: f64,
    pub ego_speed_mps: f64,
    pub num_cams: usize,
    pub image_size: (usize, usize),
    pub lidar_points_per_box: usize,
    pub radar_points_per_box: usize,
    pub ground_points_per_sweep: usize,
    /// fractions of scenes per condition (day, rain, night); must sum to ~1
    pub condition_mix: (f64, f64, f64),
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            scenes: 20,
            frames_per_scene: 10,
            boxes: 12,
            moving_fraction: 0.6,
            ego_speed_mps: 4.0,
            num_cams: 2,
            image_size: (32, 64),
            lidar_points_per_box: 6,
            radar_points_per_box: 2,
            ground_points_per_sweep: 60,
            condition_mix: (0.7, 0.15, 0.15),
        }
    }
}

/// Largest-remainder allocation of scene conditions, order shuffled
/// deterministically from the seed.
pub fn condition_schedule(spec: &GenSpec) -> Result<Vec<Condition>> {
    let (day, rain, night) = spec.condition_mix;
    let sum = day + rain + night;
    if !(0.99..=1.01).contains(&sum) {
        return Err(HarnessError::Config(format!(
            "condition mix sums to {sum}, expected 1.0"
        )));
    }
    let n = spec.scenes as f64;
    let targets = [(Condition::Day, day), (Condition::Rain, rain), (Condition::Night, night)];
    let mut counts: Vec<(Condition, usize, f64)> = targets
        .iter()
        .map(|(c, f)| {
            let exact = f * n;
            (*c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = counts.iter().map(|(_, k, _)| k).sum();
    // hand out remainders to the largest fractional parts
    while assigned < spec.scenes {
        let best = counts
            .iter_mut()
            .max_by(|a, b| a.2.partial_cmp(&b.2).expect("finite remainders"))
            .expect("non-empty");
        best.1 += 1;
        best.2 = -1.0;
        assigned += 1;
    }
    let mut schedule = Vec::with_capacity(spec.scenes);
    for (c, k, _) in counts {
        schedule.extend(std::iter::repeat_n(c, k));
    }
    let mut rng = CounterRng::new(spec.seed).derive(0xc0d);
    rng.shuffle(&mut schedule);
    Ok(schedule)
}

pub fn generate_dataset(out: &Path, spec: &GenSpec) -> Result<Vec<Scene>> {
    let schedule = condition_schedule(spec)?;
    let mut scenes = Vec::with_capacity(spec.scenes);
    for (i, condition) in schedule.iter().enumerate() {
        let scene_spec = SceneSpec {
            seed: CounterRng::new(spec.seed).derive(100 + i as u64).next_u64(),
            num_frames: spec.frames_per_scene,
            num_boxes: spec.boxes,
            moving_fraction: spec.moving_fraction,
            ego_speed_mps: spec.ego_speed_mps,
            condition: *condition,
            num_cams: spec.num_cams,
            image_size: spec.image_size,
            lidar_points_per_box: spec.lidar_points_per_box,
            radar_points_per_box: spec.radar_points_per_box,
            ground_points_per_sweep: spec.ground_points_per_sweep,
        };
        scenes.push(generate(&scene_spec)?);
    }
    write_dataset(out, &scenes)?;
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_mix_is_exact() {
        let spec = GenSpec {
            scenes: 20,
            condition_mix: (0.7, 0.15, 0.15),
            ..GenSpec::default()
        };
        let sched = condition_schedule(&spec).unwrap();
        assert_eq!(sched.len(), 20);
        assert_eq!(sched.iter().filter(|c| **c == Condition::Day).count(), 14);
        assert_eq!(sched.iter().filter(|c| **c == Condition::Rain).count(), 3);
        assert_eq!(sched.iter().filter(|c| **c == Condition::Night).count(), 3);
    }

    #[test]
    fn schedule_is_deterministic() {
        let spec = GenSpec::default();
        assert_eq!(condition_schedule(&spec).unwrap(), condition_schedule(&spec).unwrap());
    }
}
