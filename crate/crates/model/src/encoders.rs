//! Per-modality feature extraction: image backbone + neck, camera-to-BEV
//! lifting, LiDAR occupancy voxelization, and radar rasterization.

use bevmos_tensor::{ops, CounterRng, ParamSet, Tensor};

use crate::error::{ModelError, Result};
use crate::geometry::{project_to_image, BevGrid, CameraCalib};
use crate::layers::{ConvBlock, Conv2dLayer, ResidualBlock};

/// One frame's camera inputs.
#[derive(Clone)]
pub struct CameraBundle {
    pub images: Vec<Tensor>,
    pub calibs: Vec<CameraCalib>,
}

impl CameraBundle {
    pub fn new(images: Vec<Tensor>, calibs: Vec<CameraCalib>) -> Result<CameraBundle> {
        if images.len() != calibs.len() {
            return Err(ModelError::Shape {
                op: "camera_bundle",
                message: format!("{} images vs {} calibs", images.len(), calibs.len()),
            });
        }
        for img in &images {
            match img.shape() {
                [3, h, w] if h % 8 == 0 && w % 8 == 0 => {}
                other => {
                    return Err(ModelError::Shape {
                        op: "camera_bundle",
                        message: format!("image must be [3, 8k, 8k], got {other:?}"),
                    })
                }
            }
        }
        Ok(CameraBundle { images, calibs })
    }
}

/// One LiDAR scan, points already in the current reference frame.
#[derive(Clone)]
pub struct LidarSweep {
    pub points: Tensor, // [N, 3]
    pub sweep_index: usize,
}

/// One radar scan. 18 columns: 0..2 position in the reference frame, 3..17
/// retained attributes. Columns 5..6 hold the ego-motion-compensated
/// velocity vector used to resolve cell collisions.
#[derive(Clone)]
pub struct RadarSweep {
    pub points: Tensor, // [M, 18]
    pub sweep_index: usize,
}

pub const RADAR_ATTRIBUTES: usize = 18;
pub const RADAR_COMP_VEL: (usize, usize) = (5, 6);
/// Raster output: occupancy + 15 attribute channels.
pub const RADAR_CHANNELS: usize = 16;

/// Backbone stage widths; features are taken at stride 8 and stride 16.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneCfg {
    pub stage_channels: [usize; 4],
}

impl Default for BackboneCfg {
    fn default() -> Self {
        BackboneCfg {
            stage_channels: [16, 32, 64, 128],
        }
    }
}

/// Small residual conv stack with the stride contract of a 2D image
/// backbone: returns (stride-8, stride-16) feature maps.
pub struct ImageBackbone {
    cfg: BackboneCfg,
    stem: ConvBlock,
    downs: [ConvBlock; 3],
    blocks: [ResidualBlock; 3],
}

impl ImageBackbone {
    pub fn new(prefix: &str, cfg: BackboneCfg, rng: &mut CounterRng) -> ImageBackbone {
        let [c0, c1, c2, c3] = cfg.stage_channels;
        ImageBackbone {
            cfg,
            stem: ConvBlock::new(format!("{prefix}.stem"), 3, c0, 3, 2, 1, rng),
            downs: [
                ConvBlock::new(format!("{prefix}.down1"), c0, c1, 3, 2, 1, rng),
                ConvBlock::new(format!("{prefix}.down2"), c1, c2, 3, 2, 1, rng),
                ConvBlock::new(format!("{prefix}.down3"), c2, c3, 3, 2, 1, rng),
            ],
            blocks: [
                ResidualBlock::new(&format!("{prefix}.block1"), c1, rng),
                ResidualBlock::new(&format!("{prefix}.block2"), c2, rng),
                ResidualBlock::new(&format!("{prefix}.block3"), c3, rng),
            ],
        }
    }

    pub fn feat_channels(&self) -> (usize, usize) {
        (self.cfg.stage_channels[2], self.cfg.stage_channels[3])
    }

    /// [3, H, W] -> ([C2, H/8, W/8], [C3, H/16, W/16]); H, W divisible by 16.
    pub fn forward(&self, image: &Tensor) -> Result<(Tensor, Tensor)> {
        match image.shape() {
            [3, h, w] if h % 16 == 0 && w % 16 == 0 && *h >= 16 && *w >= 16 => {}
            other => {
                return Err(ModelError::Shape {
                    op: "image_backbone",
                    message: format!("need [3, 16k, 16k] image, got {other:?}"),
                })
            }
        }
        let s2 = self.stem.forward(image)?; // stride 2
        let s4 = self.blocks[0].forward(&self.downs[0].forward(&s2)?)?; // stride 4
        let s8 = self.blocks[1].forward(&self.downs[1].forward(&s4)?)?; // stride 8
        let s16 = self.blocks[2].forward(&self.downs[2].forward(&s8)?)?; // stride 16
        Ok((s8, s16))
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.stem.collect(params)?;
        for d in &self.downs {
            d.collect(params)?;
        }
        for b in &self.blocks {
            b.collect(params)?;
        }
        Ok(())
    }
}

/// Merges the two backbone scales into one stride-8 map: upsample the deep
/// features, concatenate, two conv blocks, then a 1x1 projection.
pub struct CameraNeck {
    block1: ConvBlock,
    block2: ConvBlock,
    project: Conv2dLayer,
    out_channels: usize,
}

impl CameraNeck {
    pub fn new(
        prefix: &str,
        c2: usize,
        c3: usize,
        out_channels: usize,
        rng: &mut CounterRng,
    ) -> CameraNeck {
        let mid = out_channels.max(c2);
        CameraNeck {
            block1: ConvBlock::new(format!("{prefix}.block1"), c2 + c3, mid, 3, 1, 1, rng),
            block2: ConvBlock::new(format!("{prefix}.block2"), mid, mid, 3, 1, 1, rng),
            project: Conv2dLayer::new(format!("{prefix}.project"), mid, out_channels, 1, 1, 0, rng),
            out_channels,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&self, feat2: &Tensor, feat3: &Tensor) -> Result<Tensor> {
        let (h2, w2) = match feat2.shape() {
            [_, h, w] => (*h, *w),
            other => {
                return Err(ModelError::Shape {
                    op: "camera_neck",
                    message: format!("feat2 must be [C, H, W], got {other:?}"),
                })
            }
        };
        match feat3.shape() {
            [_, h, w] if 2 * h == h2 && 2 * w == w2 => {}
            other => {
                return Err(ModelError::Shape {
                    op: "camera_neck",
                    message: format!("feat3 {other:?} is not half of feat2 [{h2}, {w2}]"),
                })
            }
        }
        let up = ops::upsample_nearest2x(feat3)?;
        let cat = ops::concat_channels(&[feat2, &up])?;
        let x = self.block1.forward(&cat)?;
        let x = self.block2.forward(&x)?;
        self.project.forward(&x)
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.block1.collect(params)?;
        self.block2.collect(params)?;
        self.project.collect(params)
    }
}

/// Precomputed voxel->pixel correspondences for one frame's cameras at one
/// feature stride. Geometry is input data, so this never changes across
/// training iterations.
pub struct LiftCache {
    /// per camera: indices of voxels seen by it, and their pixel coords
    per_camera: Vec<(Vec<usize>, Tensor)>,
    /// 1 / (number of cameras seeing the voxel), 0 where unseen
    inv_counts: Tensor,
    num_voxels: usize,
}

impl LiftCache {
    /// `calibs` must already be scaled to the feature-map resolution.
    pub fn build(grid: &BevGrid, calibs: &[CameraCalib]) -> LiftCache {
        let mut centers = Vec::with_capacity(grid.num_voxels());
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                for iz in 0..grid.nz {
                    centers.push(grid.voxel_center(ix, iy, iz));
                }
            }
        }
        let mut per_camera = Vec::with_capacity(calibs.len());
        let mut counts = vec![0.0f64; centers.len()];
        for calib in calibs {
            let (pixels, valid) = project_to_image(&centers, calib);
            let pix = pixels.data();
            let mut idx = Vec::new();
            let mut pts = Vec::new();
            for (v, ok) in valid.iter().enumerate() {
                if *ok {
                    idx.push(v);
                    pts.push(pix[v * 2]);
                    pts.push(pix[v * 2 + 1]);
                    counts[v] += 1.0;
                }
            }
            let n = idx.len();
            let pts = Tensor::from_vec(&[n, 2], pts).expect("finite pixels");
            per_camera.push((idx, pts));
        }
        for c in counts.iter_mut() {
            if *c > 0.0 {
                *c = 1.0 / *c;
            }
        }
        let inv_counts = Tensor::from_vec(&[centers.len()], counts).expect("finite counts");
        LiftCache {
            per_camera,
            inv_counts,
            num_voxels: centers.len(),
        }
    }

    pub fn num_cameras(&self) -> usize {
        self.per_camera.len()
    }
}

/// Pull per-camera 2D features into the BEV volume and fold the vertical
/// axis into channels: [C, H/8, W/8] per camera -> [C*ny, nx, nz].
///
/// Every voxel center samples each camera that sees it; overlaps average
/// over the seeing cameras; unseen voxels stay zero.
pub fn lift_to_bev(feats: &[Tensor], cache: &LiftCache, grid: &BevGrid) -> Result<Tensor> {
    if feats.len() != cache.num_cameras() {
        return Err(ModelError::Shape {
            op: "lift_to_bev",
            message: format!(
                "{} feature maps vs {} cached cameras",
                feats.len(),
                cache.num_cameras()
            ),
        });
    }
    if feats.is_empty() {
        return Err(ModelError::Config {
            op: "lift_to_bev",
            message: "no cameras".into(),
        });
    }
    let c = feats[0].shape()[0];
    for f in feats {
        if f.shape().len() != 3 || f.shape()[0] != c {
            return Err(ModelError::Shape {
                op: "lift_to_bev",
                message: format!("inconsistent feature shapes: {:?}", f.shape()),
            });
        }
    }
    let v = cache.num_voxels;
    let mut acc: Option<Tensor> = None;
    for (feat, (idx, pts)) in feats.iter().zip(cache.per_camera.iter()) {
        let sampled = ops::bilinear_sample(feat, pts)?; // [Nv, C]
        let scattered = ops::rows_scatter(&sampled, idx, v)?; // [V, C]
        acc = Some(match acc {
            None => scattered,
            Some(a) => ops::add(&a, &scattered)?,
        });
    }
    let summed = acc.expect("at least one camera");
    let averaged = ops::scale_rows(&summed, &cache.inv_counts)?; // [V, C]
    let t = ops::transpose2d(&averaged)?; // [C, V]
    let vol = ops::reshape(&t, &[c, grid.nx, grid.ny, grid.nz])?;
    let folded = ops::permute(&vol, &[0, 2, 1, 3])?; // [C, ny, nx, nz]
    Ok(ops::reshape(&folded, &[c * grid.ny, grid.nx, grid.nz])?)
}

/// Binary occupancy grid over the union of the given sweeps, shaped
/// [ny, nx, nz] so the vertical bins act as channels.
pub fn voxelize_lidar(sweeps: &[LidarSweep], grid: &BevGrid) -> Result<Tensor> {
    let mut occ = vec![0.0f64; grid.num_voxels()];
    for sweep in sweeps {
        let pts = sweep.points.data();
        if sweep.points.numel() % 3 != 0 {
            return Err(ModelError::Shape {
                op: "voxelize_lidar",
                message: format!("points shape {:?} is not [N, 3]", sweep.points.shape()),
            });
        }
        for p in pts.chunks_exact(3) {
            if let Some((ix, iy, iz)) = grid.metric_to_index([p[0], p[1], p[2]]) {
                // layout [ny, nx, nz]
                occ[(iy * grid.nx + ix) * grid.nz + iz] = 1.0;
            }
        }
    }
    Ok(Tensor::from_vec(&[grid.ny, grid.nx, grid.nz], occ)?)
}

/// Rasterized radar BEV map: channel 0 is occupancy (clipped to 1), channels
/// 1..=15 are the 15 retained attributes of the strongest mover in the cell
/// (largest compensated-velocity magnitude).
pub fn rasterize_radar(sweeps: &[RadarSweep], grid: &BevGrid) -> Result<Tensor> {
    let cells = grid.num_cells();
    let mut best_mag = vec![f64::NEG_INFINITY; cells];
    let mut out = vec![0.0f64; RADAR_CHANNELS * cells];
    for sweep in sweeps {
        match sweep.points.shape() {
            [_, w] if *w == RADAR_ATTRIBUTES => {}
            other => {
                return Err(ModelError::Shape {
                    op: "rasterize_radar",
                    message: format!("radar points must be [M, {RADAR_ATTRIBUTES}], got {other:?}"),
                })
            }
        }
        let pts = sweep.points.data();
        for p in pts.chunks_exact(RADAR_ATTRIBUTES) {
            let Some((ix, iz)) = grid.ground_to_cell(p[0], p[2]) else {
                continue;
            };
            let cell = ix * grid.nz + iz;
            out[cell] = 1.0; // occupancy
            let (vx, vz) = (p[RADAR_COMP_VEL.0], p[RADAR_COMP_VEL.1]);
            let mag = (vx * vx + vz * vz).sqrt();
            if mag > best_mag[cell] {
                best_mag[cell] = mag;
                for a in 0..RADAR_ATTRIBUTES - 3 {
                    out[(a + 1) * cells + cell] = p[a + 3];
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[RADAR_CHANNELS, grid.nx, grid.nz], out)?)
}

/// Channel width of the lifted camera BEV map for a given neck width.
pub fn camera_bev_channels(neck_out: usize, grid: &BevGrid) -> usize {
    neck_out * grid.ny
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    fn rng() -> CounterRng {
        CounterRng::new(11)
    }

    #[test]
    fn backbone_stride_contract() {
        let cfg = BackboneCfg {
            stage_channels: [4, 6, 8, 16],
        };
        let bb = ImageBackbone::new("bb", cfg, &mut rng());
        let img = Tensor::zeros(&[3, 32, 32]);
        let (f2, f3) = bb.forward(&img).unwrap();
        assert_eq!(f2.shape(), &[8, 4, 4]);
        assert_eq!(f3.shape(), &[16, 2, 2]);
    }

    #[test]
    fn backbone_zero_image_is_finite() {
        let bb = ImageBackbone::new("bb", BackboneCfg { stage_channels: [4, 4, 8, 8] }, &mut rng());
        let img = Tensor::zeros(&[3, 32, 48]);
        let (f2, f3) = bb.forward(&img).unwrap();
        assert!(f2.to_vec().iter().all(|v| v.is_finite()));
        assert!(f3.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backbone_rejects_indivisible() {
        let bb = ImageBackbone::new("bb", BackboneCfg::default(), &mut rng());
        assert!(bb.forward(&Tensor::zeros(&[3, 24, 32])).is_err());
    }

    #[test]
    fn neck_shape_contract() {
        let mut r = rng();
        let neck = CameraNeck::new("neck", 8, 16, 32, &mut r);
        let f2 = Tensor::zeros(&[8, 4, 4]);
        let f3 = Tensor::zeros(&[16, 2, 2]);
        let out = neck.forward(&f2, &f3).unwrap();
        assert_eq!(out.shape(), &[32, 4, 4]);
    }

    #[test]
    fn neck_zero_inputs_zero_output() {
        let mut r = rng();
        let neck = CameraNeck::new("neck", 8, 16, 32, &mut r);
        let out = neck
            .forward(&Tensor::zeros(&[8, 4, 4]), &Tensor::zeros(&[16, 2, 2]))
            .unwrap();
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn neck_mismatched_scales_error() {
        let mut r = rng();
        let neck = CameraNeck::new("neck", 8, 16, 32, &mut r);
        assert!(neck
            .forward(&Tensor::zeros(&[8, 4, 4]), &Tensor::zeros(&[16, 3, 2]))
            .is_err());
    }

    fn tiny_grid() -> BevGrid {
        BevGrid::new((-2.0, 2.0), (0.0, 2.0), (0.5, 4.5), 4, 2, 4).unwrap()
    }

    #[test]
    fn lift_lattice_projection_is_exact() {
        // single camera at the origin looking +Z; pick the voxel that
        // projects exactly onto an integer feature pixel and check identity
        let grid = tiny_grid();
        let calib = CameraCalib::new(
            2.0,
            2.0,
            1.5,
            1.5,
            RigidTransform::identity(),
            4,
            4,
        )
        .unwrap();
        let cache = LiftCache::build(&grid, &[calib.clone()]);
        let c = 3;
        let feat_data: Vec<f64> = (0..c * 16).map(|i| i as f64 * 0.25 + 1.0).collect();
        let feat = Tensor::from_vec(&[c, 4, 4], feat_data).unwrap();
        let out = lift_to_bev(&[feat.clone()], &cache, &grid).unwrap();
        assert_eq!(out.shape(), &[c * grid.ny, grid.nx, grid.nz]);

        // voxel (ix=2, iy=0, iz=1): center (0.5, 0.5, 2.0) projects to
        // u = 2*(0.5/2)+1.5 = 2.0, v = 2*(0.5/2)+1.5 = 2.0 (y down flips later)
        let center = grid.voxel_center(2, 0, 1);
        let (pix, valid) = project_to_image(&[center], &calib);
        assert!(valid[0]);
        let px = pix.to_vec();
        assert_eq!(px, vec![2.0, 2.0]);
        let fv = feat.to_vec();
        let out_v = out.to_vec();
        for ch in 0..c {
            let expect = fv[(ch * 4 + 2) * 4 + 2];
            // folded channel = ch * ny + iy
            let folded = (ch * grid.ny) * grid.nx * grid.nz + 2 * grid.nz + 1;
            assert!((out_v[folded] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_voxel_behind_camera_is_zero() {
        let grid = BevGrid::new((-2.0, 2.0), (0.0, 2.0), (-4.5, -0.5), 4, 1, 4).unwrap();
        let calib =
            CameraCalib::new(2.0, 2.0, 1.5, 1.5, RigidTransform::identity(), 4, 4).unwrap();
        let cache = LiftCache::build(&grid, &[calib]);
        let feat = Tensor::full(&[2, 4, 4], 3.0);
        let out = lift_to_bev(&[feat], &cache, &grid).unwrap();
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lift_two_camera_overlap_averages() {
        let grid = tiny_grid();
        let calib =
            CameraCalib::new(2.0, 2.0, 1.5, 1.5, RigidTransform::identity(), 4, 4).unwrap();
        let cache = LiftCache::build(&grid, &[calib.clone(), calib]);
        let a = Tensor::full(&[1, 4, 4], 2.0);
        let b = Tensor::full(&[1, 4, 4], 6.0);
        let out = lift_to_bev(&[a, b], &cache, &grid).unwrap();
        // every voxel either sees both cameras (average 4.0) or neither (0.0)
        for v in out.to_vec() {
            assert!(v == 0.0 || (v - 4.0).abs() < 1e-12, "{v}");
        }
        assert!(out.to_vec().iter().any(|v| *v != 0.0));
    }

    #[test]
    fn lift_permutation_equivariant_in_camera_order() {
        let grid = tiny_grid();
        let c0 = CameraCalib::looking(0.0, [0.0, 1.0, 0.0], 2.0, 2.0, 4, 4).unwrap();
        let c1 = CameraCalib::looking(0.4, [0.2, 1.0, 0.0], 2.5, 2.5, 4, 4).unwrap();
        let mut r = rng();
        let fa_data: Vec<f64> = (0..2 * 16).map(|_| r.uniform_in(-1.0, 1.0)).collect();
        let fb_data: Vec<f64> = (0..2 * 16).map(|_| r.uniform_in(-1.0, 1.0)).collect();
        let fa = Tensor::from_vec(&[2, 4, 4], fa_data).unwrap();
        let fb = Tensor::from_vec(&[2, 4, 4], fb_data).unwrap();

        let cache01 = LiftCache::build(&grid, &[c0.clone(), c1.clone()]);
        let cache10 = LiftCache::build(&grid, &[c1, c0]);
        let out01 = lift_to_bev(&[fa.clone(), fb.clone()], &cache01, &grid).unwrap();
        let out10 = lift_to_bev(&[fb, fa], &cache10, &grid).unwrap();
        for (x, y) in out01.to_vec().iter().zip(out10.to_vec().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cloud_empty_grid() {
        let grid = tiny_grid();
        let sweep = LidarSweep {
            points: Tensor::zeros(&[0, 3]),
            sweep_index: 0,
        };
        let out = voxelize_lidar(&[sweep], &grid).unwrap();
        assert_eq!(out.shape(), &[2, 4, 4]);
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_point_sets_single_cell() {
        let grid = tiny_grid();
        let center = grid.voxel_center(1, 1, 2);
        let sweep = LidarSweep {
            points: Tensor::from_vec(&[1, 3], center.to_vec()).unwrap(),
            sweep_index: 0,
        };
        let out = voxelize_lidar(&[sweep], &grid).unwrap();
        let v = out.to_vec();
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
        assert_eq!(v[(1 * grid.nx + 1) * grid.nz + 2], 1.0);
    }

    #[test]
    fn voxelize_matches_per_point_loop() {
        let grid = tiny_grid();
        let mut r = rng();
        let n = 1000;
        let mut pts = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pts.push(r.uniform_in(-3.0, 3.0));
            pts.push(r.uniform_in(-0.5, 2.5));
            pts.push(r.uniform_in(-0.5, 5.5));
        }
        let sweep = LidarSweep {
            points: Tensor::from_vec(&[n, 3], pts.clone()).unwrap(),
            sweep_index: 0,
        };
        let fast = voxelize_lidar(&[sweep], &grid).unwrap();

        let mut oracle = vec![0.0; grid.num_voxels()];
        for p in pts.chunks(3) {
            let fx = (p[0] - grid.x_min) / grid.cell_x();
            let fy = (p[1] - grid.y_min) / grid.cell_y();
            let fz = (p[2] - grid.z_min) / grid.cell_z();
            if fx >= 0.0 && fy >= 0.0 && fz >= 0.0 {
                let (ix, iy, iz) = (fx as usize, fy as usize, fz as usize);
                if ix < grid.nx && iy < grid.ny && iz < grid.nz {
                    oracle[(iy * grid.nx + ix) * grid.nz + iz] = 1.0;
                }
            }
        }
        assert_eq!(fast.to_vec(), oracle);
    }

    #[test]
    fn more_sweeps_never_remove_cells() {
        let grid = tiny_grid();
        let mut r = rng();
        let make_sweep = |r: &mut CounterRng, idx: usize| {
            let n = 50;
            let mut pts = Vec::with_capacity(n * 3);
            for _ in 0..n {
                pts.push(r.uniform_in(-2.0, 2.0));
                pts.push(r.uniform_in(0.0, 2.0));
                pts.push(r.uniform_in(0.5, 4.5));
            }
            LidarSweep {
                points: Tensor::from_vec(&[n, 3], pts).unwrap(),
                sweep_index: idx,
            }
        };
        let sweeps: Vec<LidarSweep> = (0..5).map(|i| make_sweep(&mut r, i)).collect();
        let mut prev_occupied = 0;
        for k in 1..=5 {
            let occ = voxelize_lidar(&sweeps[..k], &grid).unwrap();
            let now = occ.to_vec().iter().filter(|v| **v != 0.0).count();
            assert!(now >= prev_occupied);
            prev_occupied = now;
        }
    }

    fn radar_point(x: f64, z: f64, vx: f64, vz: f64) -> Vec<f64> {
        let mut p = vec![0.0; RADAR_ATTRIBUTES];
        p[0] = x;
        p[2] = z;
        p[3] = vx * 0.5; // raw velocity channels, arbitrary here
        p[4] = vz * 0.5;
        p[RADAR_COMP_VEL.0] = vx;
        p[RADAR_COMP_VEL.1] = vz;
        p[7] = 0.8;
        p
    }

    #[test]
    fn radar_no_points_all_zero() {
        let grid = tiny_grid();
        let sweep = RadarSweep {
            points: Tensor::zeros(&[0, RADAR_ATTRIBUTES]),
            sweep_index: 0,
        };
        let out = rasterize_radar(&[sweep], &grid).unwrap();
        assert_eq!(out.shape(), &[RADAR_CHANNELS, 4, 4]);
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn radar_single_point_attributes_verbatim() {
        let grid = tiny_grid();
        let p = radar_point(0.5, 2.0, 3.0, -1.0);
        let sweep = RadarSweep {
            points: Tensor::from_vec(&[1, RADAR_ATTRIBUTES], p.clone()).unwrap(),
            sweep_index: 0,
        };
        let out = rasterize_radar(&[sweep], &grid).unwrap();
        let (ix, iz) = grid.ground_to_cell(0.5, 2.0).unwrap();
        let cells = grid.num_cells();
        let v = out.to_vec();
        let cell = ix * grid.nz + iz;
        assert_eq!(v[cell], 1.0);
        for a in 0..15 {
            assert_eq!(v[(a + 1) * cells + cell], p[a + 3], "attribute {a}");
        }
    }

    #[test]
    fn radar_collision_keeps_fastest_mover() {
        let grid = tiny_grid();
        let slow = radar_point(0.5, 2.0, 2.0, 0.0);
        let fast = radar_point(0.6, 2.1, 5.0, 0.0);
        let mut both = slow.clone();
        both.extend_from_slice(&fast);
        let sweep = RadarSweep {
            points: Tensor::from_vec(&[2, RADAR_ATTRIBUTES], both).unwrap(),
            sweep_index: 0,
        };
        let out = rasterize_radar(&[sweep], &grid).unwrap();
        let (ix, iz) = grid.ground_to_cell(0.5, 2.0).unwrap();
        let cells = grid.num_cells();
        let cell = ix * grid.nz + iz;
        let v = out.to_vec();
        assert_eq!(v[(RADAR_COMP_VEL.0 - 3 + 1) * cells + cell], 5.0);
        assert_eq!(v[cell], 1.0);
    }

    #[test]
    fn radar_malformed_width_is_error() {
        let grid = tiny_grid();
        let sweep = RadarSweep {
            points: Tensor::zeros(&[2, 7]),
            sweep_index: 0,
        };
        assert!(rasterize_radar(&[sweep], &grid).is_err());
    }
}
