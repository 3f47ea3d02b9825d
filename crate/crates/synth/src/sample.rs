//! LiDAR and radar point sampling off box surfaces and the ground.
//!
//! Sweeps are generated at their own timestamps (boxes and ego where they
//! actually were) and expressed in the keyframe's reference frame, so
//! multi-sweep aggregation is a plain union downstream. Radar velocity
//! vectors rotate with the frame; their magnitudes are exact radial
//! velocities.

use bevmos_model::encoders::{LidarSweep, RadarSweep, RADAR_ATTRIBUTES};
use bevmos_model::geometry::EgoPose;
use bevmos_tensor::{CounterRng, Tensor};

use crate::scene::{ego_position, world_box_at};
use crate::{Result, SceneSpec, WorldBox};

const RADAR_HEIGHT_M: f64 = 0.5;
const GROUND_RING_M: (f64, f64) = (4.0, 48.0);

/// A point on the box surface (4 sides + top), area-weighted.
fn sample_surface_point(b: &WorldBox, rng: &mut CounterRng) -> [f64; 3] {
    let side_a = b.length * b.height; // two length-side faces
    let side_b = b.width * b.height; // two width-side faces
    let top = b.length * b.width;
    let total = 2.0 * side_a + 2.0 * side_b + top;
    let pick = rng.uniform_in(0.0, total);
    let (s, c) = b.yaw.sin_cos();
    let along = [s, c];
    let across = [c, -s];
    let (hl, hw) = (b.length / 2.0, b.width / 2.0);
    // local (u along heading, v across, y up from ground)
    let (u, v, y) = if pick < 2.0 * side_a {
        let sign = if pick < side_a { 1.0 } else { -1.0 };
        (
            rng.uniform_in(-hl, hl),
            sign * hw,
            rng.uniform_in(0.0, b.height),
        )
    } else if pick < 2.0 * side_a + 2.0 * side_b {
        let sign = if pick < 2.0 * side_a + side_b { 1.0 } else { -1.0 };
        (
            sign * hl,
            rng.uniform_in(-hw, hw),
            rng.uniform_in(0.0, b.height),
        )
    } else {
        (
            rng.uniform_in(-hl, hl),
            rng.uniform_in(-hw, hw),
            b.height,
        )
    };
    [
        b.center0[0] + u * along[0] + v * across[0],
        y,
        b.center0[2] + u * along[1] + v * across[1],
    ]
}

/// Whether a world point lies on (or within `tol` of) a box's surface shell.
pub fn box_surface_contains(b: &WorldBox, p: [f64; 3], tol: f64) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let dx = p[0] - b.center0[0];
    let dz = p[2] - b.center0[2];
    let u = dx * s + dz * c;
    let v = dx * c - dz * s;
    u.abs() <= b.length / 2.0 + tol
        && v.abs() <= b.width / 2.0 + tol
        && p[1] >= -tol
        && p[1] <= b.height + tol
}

/// LiDAR sweep at time t, expressed in the keyframe reference frame.
pub fn lidar_sweep(
    spec: &SceneSpec,
    boxes: &[WorldBox],
    t: f64,
    sweep_index: usize,
    key_pose: &EgoPose,
    rng: &mut CounterRng,
) -> Result<LidarSweep> {
    let mut pts = Vec::new();
    for b in boxes {
        let at_t = world_box_at(b, t);
        for _ in 0..spec.lidar_points_per_box {
            let p = sample_surface_point(&at_t, rng);
            let r = key_pose.world_to_ref.apply(p);
            pts.extend_from_slice(&r);
        }
    }
    let ego = ego_position(spec, t);
    for _ in 0..spec.ground_points_per_sweep {
        let ang = rng.uniform_in(0.0, std::f64::consts::TAU);
        let rad = rng.uniform_in(GROUND_RING_M.0, GROUND_RING_M.1);
        let p = [ego[0] + rad * ang.sin(), 0.0, ego[2] + rad * ang.cos()];
        let r = key_pose.world_to_ref.apply(p);
        pts.extend_from_slice(&r);
    }
    let n = pts.len() / 3;
    Ok(LidarSweep {
        points: Tensor::from_vec(&[n, 3], pts)?,
        sweep_index,
    })
}

/// Radar sweep at time t in the keyframe reference frame.
///
/// Column layout: 0..2 position; 3..4 raw radial velocity vector (relative
/// to the moving sensor); 5..6 ego-motion-compensated radial velocity vector
/// (relative to ground); 7 RCS proxy; 8..17 zero.
pub fn radar_sweep(
    spec: &SceneSpec,
    boxes: &[WorldBox],
    t: f64,
    sweep_index: usize,
    key_pose: &EgoPose,
    rng: &mut CounterRng,
) -> Result<RadarSweep> {
    let sensor = {
        let e = ego_position(spec, t);
        [e[0], RADAR_HEIGHT_M, e[2]]
    };
    // d/dt of the ego trajectory in scene.rs
    let ego_vel = [0.8 * 0.15 * (0.15 * t).cos(), spec.ego_speed_mps];

    let mut rows = Vec::new();
    for b in boxes {
        let at_t = world_box_at(b, t);
        for _ in 0..spec.radar_points_per_box {
            let p = sample_surface_point(&at_t, rng);
            let dx = p[0] - sensor[0];
            let dz = p[2] - sensor[2];
            let range = (dx * dx + dz * dz).sqrt();
            if range < 1e-6 {
                continue;
            }
            let dir = [dx / range, dz / range];

            let rel = [b.velocity[0] - ego_vel[0], b.velocity[1] - ego_vel[1]];
            let raw_r = rel[0] * dir[0] + rel[1] * dir[1];
            let comp_r = b.velocity[0] * dir[0] + b.velocity[1] * dir[1];
            let raw_w = [raw_r * dir[0], raw_r * dir[1]];
            let comp_w = [comp_r * dir[0], comp_r * dir[1]];

            let pos_ref = key_pose.world_to_ref.apply(p);
            let raw_ref = key_pose.world_to_ref.rotate([raw_w[0], 0.0, raw_w[1]]);
            let comp_ref = key_pose.world_to_ref.rotate([comp_w[0], 0.0, comp_w[1]]);

            let mut row = [0.0; RADAR_ATTRIBUTES];
            row[0] = pos_ref[0];
            row[1] = pos_ref[1];
            row[2] = pos_ref[2];
            row[3] = raw_ref[0];
            row[4] = raw_ref[2];
            row[5] = comp_ref[0];
            row[6] = comp_ref[2];
            row[7] = b.rcs;
            rows.extend_from_slice(&row);
        }
    }
    let m = rows.len() / RADAR_ATTRIBUTES;
    Ok(RadarSweep {
        points: Tensor::from_vec(&[m, RADAR_ATTRIBUTES], rows)?,
        sweep_index,
    })
}
