//! Scene construction: box placement, ego trajectory, per-frame assembly.

use bevmos_model::encoders::CameraBundle;
use bevmos_model::geometry::{CameraCalib, EgoPose, RigidTransform};
use bevmos_model::metrics::ObstacleBox;
use bevmos_tensor::CounterRng;

use crate::condition::apply_condition;
use crate::render::render_camera;
use crate::sample::{lidar_sweep, radar_sweep};
use crate::{Condition, Result, Scene, SceneFrame, SceneSpec, SynthError, WorldBox};

/// Keyframes at 2 Hz; intermediate sensor sweeps at 10 Hz.
pub const FRAME_PERIOD_S: f64 = 0.5;
pub const SWEEP_PERIOD_S: f64 = 0.1;
pub const SWEEPS_PER_FRAME: usize = 5;

pub const CAMERA_HEIGHT_M: f64 = 1.6;
const PLACEMENT_EXTENT_M: f64 = 46.0;
const EGO_CLEARANCE_M: f64 = 6.0;
const PLACEMENT_TRIES_PER_BOX: usize = 200;
const MOVER_SPEED_RANGE: (f64, f64) = (6.0, 14.0);
const BOX_LENGTH_RANGE: (f64, f64) = (8.0, 14.0);
const BOX_WIDTH_RANGE: (f64, f64) = (3.5, 5.0);
const BOX_HEIGHT_RANGE: (f64, f64) = (2.2, 3.2);

/// Ego world position at time t: forward along +Z with a gentle weave.
pub fn ego_position(spec: &SceneSpec, t: f64) -> [f64; 3] {
    [0.8 * (0.15 * t).sin(), 0.0, spec.ego_speed_mps * t]
}

/// Ego heading at time t (radians about +Y).
pub fn ego_yaw(_spec: &SceneSpec, t: f64) -> f64 {
    0.06 * (0.25 * t).sin()
}

/// world -> reference transform of the ego at time t.
pub fn ego_pose_at(spec: &SceneSpec, t: f64, timestamp_us: i64) -> EgoPose {
    let pos = ego_position(spec, t);
    let yaw = ego_yaw(spec, t);
    let rot = RigidTransform::yaw_translation(-yaw, [0.0; 3]);
    let shifted = rot.rotate([-pos[0], -pos[1], -pos[2]]);
    EgoPose::new(
        RigidTransform {
            rotation: rot.rotation,
            translation: shifted,
        },
        timestamp_us,
    )
    .expect("yaw rotation is orthonormal")
}

/// World-frame box state at time t (constant velocity).
pub fn world_box_at(b: &WorldBox, t: f64) -> WorldBox {
    let mut out = b.clone();
    out.center0 = [
        b.center0[0] + b.velocity[0] * t,
        b.center0[1],
        b.center0[2] + b.velocity[1] * t,
    ];
    out
}

/// Box expressed in the reference frame of `pose`.
fn box_in_ref(b: &WorldBox, t: f64, pose: &EgoPose, ego_yaw_t: f64) -> ObstacleBox {
    let at_t = world_box_at(b, t);
    let center = pose.world_to_ref.apply(at_t.center0);
    let v = pose.world_to_ref.rotate([b.velocity[0], 0.0, b.velocity[1]]);
    ObstacleBox {
        center,
        yaw: b.yaw - ego_yaw_t,
        length: b.length,
        width: b.width,
        height: b.height,
        moving: b.moving,
        velocity: [v[0], v[2]],
    }
}

fn place_boxes(spec: &SceneSpec, rng: &mut CounterRng) -> Result<Vec<WorldBox>> {
    let duration = (spec.num_frames - 1) as f64 * FRAME_PERIOD_S;
    let z_lo = -PLACEMENT_EXTENT_M;
    let z_hi = PLACEMENT_EXTENT_M + spec.ego_speed_mps * duration;
    let num_moving = (spec.moving_fraction * spec.num_boxes as f64).round() as usize;

    let mut placed: Vec<WorldBox> = Vec::with_capacity(spec.num_boxes);
    for i in 0..spec.num_boxes {
        let length = rng.uniform_in(BOX_LENGTH_RANGE.0, BOX_LENGTH_RANGE.1);
        let width = rng.uniform_in(BOX_WIDTH_RANGE.0, BOX_WIDTH_RANGE.1);
        let height = rng.uniform_in(BOX_HEIGHT_RANGE.0, BOX_HEIGHT_RANGE.1);
        let radius = 0.5 * (length * length + width * width).sqrt();
        let moving = i < num_moving;
        let mut ok = None;
        for _ in 0..PLACEMENT_TRIES_PER_BOX {
            let x = rng.uniform_in(-PLACEMENT_EXTENT_M, PLACEMENT_EXTENT_M);
            let z = rng.uniform_in(z_lo, z_hi);
            // keep spawn clear of the ego path (x near 0 along the run)
            if x.abs() < EGO_CLEARANCE_M && (-4.0..=z_hi).contains(&z) {
                continue;
            }
            let clear = placed.iter().all(|other| {
                let o_radius =
                    0.5 * (other.length * other.length + other.width * other.width).sqrt();
                let dx = other.center0[0] - x;
                let dz = other.center0[2] - z;
                (dx * dx + dz * dz).sqrt() > radius + o_radius + 1.0
            });
            if clear {
                ok = Some((x, z));
                break;
            }
        }
        let Some((x, z)) = ok else {
            return Err(SynthError::Unplaceable {
                placed: placed.len(),
                requested: spec.num_boxes,
            });
        };
        let (yaw, velocity) = if moving {
            let heading = rng.uniform_in(0.0, std::f64::consts::TAU);
            let speed = rng.uniform_in(MOVER_SPEED_RANGE.0, MOVER_SPEED_RANGE.1);
            (heading, [heading.sin() * speed, heading.cos() * speed])
        } else {
            (rng.uniform_in(0.0, std::f64::consts::TAU), [0.0, 0.0])
        };
        let color = [
            rng.uniform_in(0.55, 1.0),
            rng.uniform_in(0.55, 1.0),
            rng.uniform_in(0.55, 1.0),
        ];
        placed.push(WorldBox {
            center0: [x, height / 2.0, z],
            yaw,
            length,
            width,
            height,
            moving,
            velocity,
            color,
            rcs: rng.uniform_in(0.5, 1.0),
        });
    }
    Ok(placed)
}

/// Camera rig in the reference frame: evenly spread headings, shared
/// intrinsics with ~115 degrees horizontal field of view.
pub fn camera_rig(spec: &SceneSpec) -> Vec<CameraCalib> {
    let (h, w) = spec.image_size;
    let f = 0.32 * w as f64;
    (0..spec.num_cams)
        .map(|i| {
            let yaw = std::f64::consts::TAU * i as f64 / spec.num_cams as f64;
            CameraCalib::looking(yaw, [0.0, CAMERA_HEIGHT_M, 0.0], f, f, w, h)
                .expect("rig construction")
        })
        .collect()
}

/// Generate the scene: closed-form world plus rendered/sampled frames.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let root = CounterRng::new(spec.seed);
    let mut placement_rng = root.derive(1);
    let world_boxes = place_boxes(spec, &mut placement_rng)?;
    let calibs = camera_rig(spec);

    let mut frames = Vec::with_capacity(spec.num_frames);
    for k in 0..spec.num_frames {
        let t = k as f64 * FRAME_PERIOD_S;
        let timestamp_us = (t * 1e6) as i64;
        let pose = ego_pose_at(spec, t, timestamp_us);
        let yaw_t = ego_yaw(spec, t);

        let boxes: Vec<ObstacleBox> = world_boxes
            .iter()
            .map(|b| box_in_ref(b, t, &pose, yaw_t))
            .collect();

        let frame_rng = root.derive(1000 + k as u64);
        let images = calibs
            .iter()
            .map(|calib| render_camera(calib, &world_boxes, t, &pose))
            .collect::<Result<Vec<_>>>()?;
        let cameras = CameraBundle::new(images, calibs.clone())?;

        let mut lidar = Vec::with_capacity(SWEEPS_PER_FRAME);
        let mut radar = Vec::with_capacity(SWEEPS_PER_FRAME);
        for s in 0..SWEEPS_PER_FRAME {
            let t_s = t - s as f64 * SWEEP_PERIOD_S;
            let mut sweep_rng = frame_rng.derive(10 + s as u64);
            lidar.push(lidar_sweep(spec, &world_boxes, t_s, s, &pose, &mut sweep_rng)?);
            let mut radar_rng = frame_rng.derive(20 + s as u64);
            radar.push(radar_sweep(spec, &world_boxes, t_s, s, &pose, &mut radar_rng)?);
        }

        let raw = SceneFrame {
            cameras,
            lidar,
            radar,
            ego: pose,
            boxes,
            condition: Condition::Day,
            noise_seed: spec.seed ^ (0x9e37 + k as u64).wrapping_mul(0x1000_0000_01b3),
        };
        frames.push(apply_condition(&raw, spec.condition)?);
    }

    Ok(Scene {
        spec: spec.clone(),
        world_boxes,
        frames,
    })
}

/// Just the frames (the common entry point).
pub fn generate_scene(spec: &SceneSpec) -> Result<Vec<SceneFrame>> {
    Ok(generate(spec)?.frames)
}
