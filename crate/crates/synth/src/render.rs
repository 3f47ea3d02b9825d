//! Flat-shaded box rasterizer over a world-anchored procedural ground.
//!
//! Painter's algorithm: per-pixel ray for sky/ground shading, then box faces
//! far to near. No lighting model; world-anchored ground texture gives the
//! camera branch consistent parallax across frames.

use bevmos_model::geometry::{CameraCalib, EgoPose};
use bevmos_tensor::Tensor;

use crate::scene::world_box_at;
use crate::{Result, WorldBox};

const SKY: [f64; 3] = [0.42, 0.46, 0.52];
const FACE_SHADE: [f64; 3] = [1.0, 0.85, 0.7]; // top, z-facing, x-facing

fn hash2(xi: i64, zi: i64) -> f64 {
    let mut h = (xi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (zi as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    h ^= h >> 29;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 32;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Ground brightness at a world position: 2 m tiles with hashed jitter.
fn ground_shade(x: f64, z: f64) -> f64 {
    let (xi, zi) = ((x / 2.0).floor() as i64, (z / 2.0).floor() as i64);
    let checker = if (xi + zi).rem_euclid(2) == 0 { 0.06 } else { 0.0 };
    0.22 + checker + 0.08 * hash2(xi, zi)
}

/// Render one camera image [3, H, W] of the scene at time t.
pub fn render_camera(
    calib: &CameraCalib,
    world_boxes: &[WorldBox],
    t: f64,
    pose: &EgoPose,
) -> Result<Tensor> {
    let (h, w) = (calib.height, calib.width);
    let mut img = vec![0.0; 3 * h * w];

    // camera center and rotation rows (ref -> cam); columns give cam -> ref
    let ext = &calib.extrinsic;
    let cam_center = ext.inverse().translation;
    let ref_to_world = pose.world_to_ref.inverse();

    // background: sky above the horizon, textured ground below
    for v in 0..h {
        for u in 0..w {
            let dir_cam = [
                (u as f64 - calib.cx) / calib.fx,
                (v as f64 - calib.cy) / calib.fy,
                1.0,
            ];
            // rotate into the reference frame (transpose of ref->cam rows)
            let r = &ext.rotation;
            let dir = [
                r[0][0] * dir_cam[0] + r[1][0] * dir_cam[1] + r[2][0] * dir_cam[2],
                r[0][1] * dir_cam[0] + r[1][1] * dir_cam[1] + r[2][1] * dir_cam[2],
                r[0][2] * dir_cam[0] + r[1][2] * dir_cam[1] + r[2][2] * dir_cam[2],
            ];
            let color = if dir[1] < -1e-6 {
                let step = -cam_center[1] / dir[1];
                let gx = cam_center[0] + step * dir[0];
                let gz = cam_center[2] + step * dir[2];
                let pw = ref_to_world.apply([gx, 0.0, gz]);
                let g = ground_shade(pw[0], pw[2]);
                [g, g * 0.98, g * 0.92]
            } else {
                SKY
            };
            for c in 0..3 {
                img[(c * h + v) * w + u] = color[c];
            }
        }
    }

    // boxes far to near by camera depth
    let mut order: Vec<(usize, f64)> = world_boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let center_ref = pose.world_to_ref.apply(world_box_at(b, t).center0);
            let cam = ext.apply(center_ref);
            (i, cam[2])
        })
        .collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite depths"));

    for (bi, depth) in order {
        if depth <= 0.0 {
            continue;
        }
        draw_box(&mut img, calib, &world_boxes[bi], t, pose, h, w);
    }

    Ok(Tensor::from_vec(&[3, h, w], img)?)
}

/// Count of pixels a box covers in a render (test support): pixels that
/// differ from a render without the box.
pub fn box_pixel_footprint(
    calib: &CameraCalib,
    world_boxes: &[WorldBox],
    box_index: usize,
    t: f64,
    pose: &EgoPose,
) -> Result<usize> {
    let with = render_camera(calib, world_boxes, t, pose)?;
    let without: Vec<WorldBox> = world_boxes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != box_index)
        .map(|(_, b)| b.clone())
        .collect();
    let base = render_camera(calib, &without, t, pose)?;
    let (h, w) = (calib.height, calib.width);
    let (a, b) = (with.data(), base.data());
    let mut count = 0;
    for px in 0..h * w {
        if (0..3).any(|c| (a[c * h * w + px] - b[c * h * w + px]).abs() > 1e-12) {
            count += 1;
        }
    }
    Ok(count)
}

fn draw_box(
    img: &mut [f64],
    calib: &CameraCalib,
    b: &WorldBox,
    t: f64,
    pose: &EgoPose,
    h: usize,
    w: usize,
) {
    let at_t = world_box_at(b, t);
    let (s, c) = at_t.yaw.sin_cos();
    let along = [s, c]; // length axis in world XZ
    let across = [c, -s];
    let (hl, hw, hh) = (at_t.length / 2.0, at_t.width / 2.0, at_t.height / 2.0);
    let center = at_t.center0;

    // eight corners in world coordinates
    let corner = |su: f64, sv: f64, sy: f64| -> [f64; 3] {
        [
            center[0] + su * hl * along[0] + sv * hw * across[0],
            center[1] + sy * hh,
            center[2] + su * hl * along[1] + sv * hw * across[1],
        ]
    };
    // faces as corner quads with their shading class
    let faces: [([[f64; 3]; 4], usize); 5] = [
        ([corner(-1.0, -1.0, 1.0), corner(1.0, -1.0, 1.0), corner(1.0, 1.0, 1.0), corner(-1.0, 1.0, 1.0)], 0), // top
        ([corner(-1.0, -1.0, -1.0), corner(1.0, -1.0, -1.0), corner(1.0, -1.0, 1.0), corner(-1.0, -1.0, 1.0)], 2),
        ([corner(-1.0, 1.0, -1.0), corner(1.0, 1.0, -1.0), corner(1.0, 1.0, 1.0), corner(-1.0, 1.0, 1.0)], 2),
        ([corner(-1.0, -1.0, -1.0), corner(-1.0, 1.0, -1.0), corner(-1.0, 1.0, 1.0), corner(-1.0, -1.0, 1.0)], 1),
        ([corner(1.0, -1.0, -1.0), corner(1.0, 1.0, -1.0), corner(1.0, 1.0, 1.0), corner(1.0, -1.0, 1.0)], 1),
    ];

    for (quad, shade_class) in faces {
        let mut proj = [[0.0f64; 2]; 4];
        let mut ok = true;
        for (i, p) in quad.iter().enumerate() {
            let ref_p = pose.world_to_ref.apply(*p);
            let cam = calib.extrinsic.apply(ref_p);
            if cam[2] < 0.05 {
                ok = false;
                break;
            }
            proj[i] = [
                calib.fx * (cam[0] / cam[2]) + calib.cx,
                calib.fy * (cam[1] / cam[2]) + calib.cy,
            ];
        }
        if !ok {
            continue;
        }
        let shade = FACE_SHADE[shade_class];
        let color = [b.color[0] * shade, b.color[1] * shade, b.color[2] * shade];
        fill_quad(img, &proj, &color, h, w);
    }
}

/// Fill a convex quad given in pixel coordinates.
fn fill_quad(img: &mut [f64], quad: &[[f64; 2]; 4], color: &[f64; 3], h: usize, w: usize) {
    let min_x = quad.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_x = (quad.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
        .clamp(0, w as i64 - 1) as usize;
    let min_y = quad.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_y = (quad.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
        .clamp(0, h as i64 - 1) as usize;
    if min_x > max_x || min_y > max_y {
        return;
    }
    for py in min_y..=max_y {
        for px in min_x..=max_x {
            let (x, y) = (px as f64 + 0.0, py as f64 + 0.0);
            // inside the convex polygon if all edge cross products share sign
            let mut pos = false;
            let mut neg = false;
            for i in 0..4 {
                let a = quad[i];
                let b = quad[(i + 1) % 4];
                let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                if cross > 0.0 {
                    pos = true;
                } else if cross < 0.0 {
                    neg = true;
                }
            }
            if pos && neg {
                continue;
            }
            for c in 0..3 {
                img[(c * h + py) * w + px] = color[c];
            }
        }
    }
}
