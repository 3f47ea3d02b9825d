//! Coordinate frames, camera projection, and the metric BEV grid.
//!
//! Conventions, fixed everywhere in this workspace:
//!   - reference frame: X right, Y up, Z forward, anchored at the current
//!     frame's ego origin;
//!   - BEV maps are indexed [channel, x_index, z_index];
//!   - voxel enumeration is X-major, then Y, then Z;
//!   - camera frames follow the usual computer-vision layout (x right in the
//!     image, y down, z along the optical axis).

use bevmos_tensor::{ops, Tensor};

use crate::error::{ModelError, Result};

/// Rigid transform p' = R p + t.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> RigidTransform {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    /// Rotation about the +Y (up) axis by `yaw` radians, then translation.
    pub fn yaw_translation(yaw: f64, translation: [f64; 3]) -> RigidTransform {
        let (s, c) = yaw.sin_cos();
        RigidTransform {
            rotation: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            translation,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    /// Rotate a direction (no translation).
    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
            r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
            r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
        ]
    }

    pub fn inverse(&self) -> RigidTransform {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = self.translation;
        let nt = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        RigidTransform {
            rotation: rt,
            translation: nt,
        }
    }

    /// self after `other`: (self * other)(p) = self(other(p)).
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        let translation = self.apply(other.translation);
        RigidTransform {
            rotation,
            translation,
        }
    }

    /// Orthonormality and det = +1 to 1e-9.
    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-9 {
                    return Err(ModelError::BadTransform(format!(
                        "rows {i},{j} not orthonormal (dot {dot})"
                    )));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > 1e-9 {
            return Err(ModelError::BadTransform(format!("det {det} != +1")));
        }
        Ok(())
    }
}

/// Ego pose: world -> reference-frame transform at a timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoPose {
    pub world_to_ref: RigidTransform,
    pub timestamp_us: i64,
}

impl EgoPose {
    pub fn new(world_to_ref: RigidTransform, timestamp_us: i64) -> Result<EgoPose> {
        world_to_ref.validate()?;
        Ok(EgoPose {
            world_to_ref,
            timestamp_us,
        })
    }
}

/// Metric-to-index mapping of the X*Y*Z volume around the ego vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Default for BevGrid {
    /// 100 m x 100 m around the ego at 0.5 m cells, 10 m vertical span over
    /// 8 bins: 200 x 8 x 200.
    fn default() -> Self {
        BevGrid {
            x_min: -50.0,
            x_max: 50.0,
            y_min: -1.5,
            y_max: 8.5,
            z_min: -50.0,
            z_max: 50.0,
            nx: 200,
            ny: 8,
            nz: 200,
        }
    }
}

impl BevGrid {
    pub fn new(
        x_range: (f64, f64),
        y_range: (f64, f64),
        z_range: (f64, f64),
        nx: usize,
        ny: usize,
        nz: usize,
    ) -> Result<BevGrid> {
        if nx == 0 || ny == 0 || nz == 0 || x_range.1 <= x_range.0 || y_range.1 <= y_range.0
            || z_range.1 <= z_range.0
        {
            return Err(ModelError::Config {
                op: "bev_grid",
                message: format!("degenerate grid {x_range:?} {y_range:?} {z_range:?} {nx}x{ny}x{nz}"),
            });
        }
        Ok(BevGrid {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            z_min: z_range.0,
            z_max: z_range.1,
            nx,
            ny,
            nz,
        })
    }

    pub fn cell_x(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn cell_y(&self) -> f64 {
        (self.y_max - self.y_min) / self.ny as f64
    }

    pub fn cell_z(&self) -> f64 {
        (self.z_max - self.z_min) / self.nz as f64
    }

    pub fn num_voxels(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.nz
    }

    pub fn voxel_center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.x_min + (ix as f64 + 0.5) * self.cell_x(),
            self.y_min + (iy as f64 + 0.5) * self.cell_y(),
            self.z_min + (iz as f64 + 0.5) * self.cell_z(),
        ]
    }

    /// Voxel containing a metric point, or None outside the volume.
    pub fn metric_to_index(&self, p: [f64; 3]) -> Option<(usize, usize, usize)> {
        let fx = (p[0] - self.x_min) / self.cell_x();
        let fy = (p[1] - self.y_min) / self.cell_y();
        let fz = (p[2] - self.z_min) / self.cell_z();
        if fx < 0.0 || fy < 0.0 || fz < 0.0 {
            return None;
        }
        let (ix, iy, iz) = (fx as usize, fy as usize, fz as usize);
        if ix >= self.nx || iy >= self.ny || iz >= self.nz {
            return None;
        }
        Some((ix, iy, iz))
    }

    /// BEV cell containing an (x, z) ground position.
    pub fn ground_to_cell(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let fx = (x - self.x_min) / self.cell_x();
        let fz = (z - self.z_min) / self.cell_z();
        if fx < 0.0 || fz < 0.0 {
            return None;
        }
        let (ix, iz) = (fx as usize, fz as usize);
        if ix >= self.nx || iz >= self.nz {
            return None;
        }
        Some((ix, iz))
    }

    /// Continuous fractional index of an (x, z) position: integer values sit
    /// on cell centers.
    pub fn ground_to_continuous(&self, x: f64, z: f64) -> (f64, f64) {
        (
            (x - self.x_min) / self.cell_x() - 0.5,
            (z - self.z_min) / self.cell_z() - 0.5,
        )
    }

    /// Metric distance of each BEV cell center from the ego origin,
    /// X-major then Z — matches [nx, nz] map layout.
    pub fn cell_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_cells());
        for ix in 0..self.nx {
            let x = self.x_min + (ix as f64 + 0.5) * self.cell_x();
            for iz in 0..self.nz {
                let z = self.z_min + (iz as f64 + 0.5) * self.cell_z();
                out.push((x * x + z * z).sqrt());
            }
        }
        out
    }

    /// Linear voxel index, X-major then Y then Z.
    pub fn voxel_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ny + iy) * self.nz + iz
    }
}

/// All voxel centroids as a [nx*ny*nz, 3] tensor, X-major then Y then Z.
pub fn voxel_centers(grid: &BevGrid) -> Tensor {
    let mut data = Vec::with_capacity(grid.num_voxels() * 3);
    for ix in 0..grid.nx {
        for iy in 0..grid.ny {
            for iz in 0..grid.nz {
                let c = grid.voxel_center(ix, iy, iz);
                data.extend_from_slice(&c);
            }
        }
    }
    Tensor::from_vec(&[grid.num_voxels(), 3], data).expect("finite voxel centers")
}

/// Pinhole camera: intrinsics plus a reference->camera rigid transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub extrinsic: RigidTransform,
    pub width: usize,
    pub height: usize,
}

impl CameraCalib {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        extrinsic: RigidTransform,
        width: usize,
        height: usize,
    ) -> Result<CameraCalib> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(ModelError::Config {
                op: "camera_calib",
                message: format!("focal lengths must be positive (fx={fx}, fy={fy})"),
            });
        }
        extrinsic.validate()?;
        Ok(CameraCalib {
            fx,
            fy,
            cx,
            cy,
            extrinsic,
            width,
            height,
        })
    }

    /// Camera at `center` (reference frame), optical axis along the horizontal
    /// direction given by `yaw` (0 = +Z), image y pointing down.
    pub fn looking(
        yaw: f64,
        center: [f64; 3],
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Result<CameraCalib> {
        let (s, c) = yaw.sin_cos();
        // camera basis in reference coordinates, right-handed with y down
        let z_cam = [s, 0.0, c];
        let y_cam = [0.0, -1.0, 0.0];
        let x_cam = [-c, 0.0, s]; // y_cam x z_cam
        let rotation = [x_cam, y_cam, z_cam];
        let rt = RigidTransform {
            rotation,
            translation: [0.0; 3],
        };
        let t = rt.rotate(center);
        let extrinsic = RigidTransform {
            rotation,
            translation: [-t[0], -t[1], -t[2]],
        };
        CameraCalib::new(
            fx,
            fy,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            extrinsic,
            width,
            height,
        )
    }

    /// Rescaled copy for a feature map downsampled by `factor`.
    pub fn scaled(&self, factor: f64) -> CameraCalib {
        CameraCalib {
            fx: self.fx / factor,
            fy: self.fy / factor,
            cx: (self.cx + 0.5) / factor - 0.5,
            cy: (self.cy + 0.5) / factor - 0.5,
            extrinsic: self.extrinsic.clone(),
            width: (self.width as f64 / factor) as usize,
            height: (self.height as f64 / factor) as usize,
        }
    }
}

/// Pinhole projection of reference-frame points.
///
/// valid = in front of the camera and inside [0, W-1] x [0, H-1]; invalid
/// rows carry pixel (0, 0).
pub fn project_to_image(points: &[[f64; 3]], calib: &CameraCalib) -> (Tensor, Vec<bool>) {
    let mut pixels = Vec::with_capacity(points.len() * 2);
    let mut valid = Vec::with_capacity(points.len());
    let w_max = calib.width as f64 - 1.0;
    let h_max = calib.height as f64 - 1.0;
    for p in points {
        let pc = calib.extrinsic.apply(*p);
        if pc[2] <= 0.0 {
            pixels.extend_from_slice(&[0.0, 0.0]);
            valid.push(false);
            continue;
        }
        let u = calib.fx * (pc[0] / pc[2]) + calib.cx;
        let v = calib.fy * (pc[1] / pc[2]) + calib.cy;
        if u < 0.0 || u > w_max || v < 0.0 || v > h_max {
            pixels.extend_from_slice(&[0.0, 0.0]);
            valid.push(false);
        } else {
            pixels.extend_from_slice(&[u, v]);
            valid.push(true);
        }
    }
    let t = Tensor::from_vec(&[points.len(), 2], pixels).expect("finite pixels");
    (t, valid)
}

/// Resample a previous-frame BEV map onto the current grid, compensating the
/// relative ego motion. Each current cell center is carried into the previous
/// reference frame and bilinearly sampled; off-grid samples are zero.
/// Differentiable w.r.t. `prev_feat`.
pub fn warp_bev(
    prev_feat: &Tensor,
    pose_prev: &EgoPose,
    pose_curr: &EgoPose,
    grid: &BevGrid,
) -> Result<Tensor> {
    let pts = warp_sample_points(pose_prev, pose_curr, grid);
    warp_bev_with_points(prev_feat, &pts, grid)
}

/// The continuous previous-grid sample positions for every current cell,
/// as a [nx*nz, 2] tensor of (z_index, x_index) bilinear coordinates.
/// Precomputable per frame pair.
pub fn warp_sample_points(pose_prev: &EgoPose, pose_curr: &EgoPose, grid: &BevGrid) -> Tensor {
    // current ref -> world -> previous ref
    let curr_to_prev = pose_prev
        .world_to_ref
        .compose(&pose_curr.world_to_ref.inverse());
    let mut pts = Vec::with_capacity(grid.num_cells() * 2);
    for ix in 0..grid.nx {
        let x = grid.x_min + (ix as f64 + 0.5) * grid.cell_x();
        for iz in 0..grid.nz {
            let z = grid.z_min + (iz as f64 + 0.5) * grid.cell_z();
            let p = curr_to_prev.apply([x, 0.0, z]);
            let (fx, fz) = grid.ground_to_continuous(p[0], p[2]);
            // maps are [C, nx, nz]: sample x-coordinate runs along nz
            pts.push(fz);
            pts.push(fx);
        }
    }
    Tensor::from_vec(&[grid.num_cells(), 2], pts).expect("finite warp points")
}

/// warp_bev with precomputed sample points (see [`warp_sample_points`]).
pub fn warp_bev_with_points(prev_feat: &Tensor, points: &Tensor, grid: &BevGrid) -> Result<Tensor> {
    let c = match prev_feat.shape() {
        [c, nx, nz] if *nx == grid.nx && *nz == grid.nz => *c,
        other => {
            return Err(ModelError::Shape {
                op: "warp_bev",
                message: format!(
                    "expected [C, {}, {}] map, got {:?}",
                    grid.nx, grid.nz, other
                ),
            })
        }
    };
    let sampled = ops::bilinear_sample(prev_feat, points)?; // [N, C]
    let t = ops::transpose2d(&sampled)?; // [C, N]
    Ok(ops::reshape(&t, &[c, grid.nx, grid.nz])?)
}
