//! Sensor fusion in BEV: plain concatenation or multimodal deformable
//! cross-attention, followed by a residual BEV encoder.
//!
//! The deformable attention layer forms its queries from a linear projection
//! of two concatenated source maps. Per head and modality it samples K keys
//! at learned offsets around each cell's reference point, weights them with
//! a softmax spanning all M*K keys of the head, projects per modality and
//! per head, and sums. Offsets are in cell units and start at zero, so
//! training begins as plain reference-point attention with uniform weights.

use bevmos_tensor::{ops, CounterRng, ParamSet, Tensor};

use crate::error::{ModelError, Result};
use crate::layers::{ConvBlock, Conv2dLayer, LinearLayer, ResidualBlock, NORM_EPS};

/// Which sensors a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalitySet {
    pub camera: bool,
    pub radar: bool,
    pub lidar: bool,
}

impl ModalitySet {
    pub const CAMERA: ModalitySet = ModalitySet {
        camera: true,
        radar: false,
        lidar: false,
    };
    pub const ALL: ModalitySet = ModalitySet {
        camera: true,
        radar: true,
        lidar: true,
    };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.camera {
            parts.push("C");
        }
        if self.radar {
            parts.push("R");
        }
        if self.lidar {
            parts.push("L");
        }
        parts.join("+")
    }
}

/// How the per-modality BEV maps combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionStrategy {
    /// Channel concatenation of all present maps, then compression.
    Concat,
    /// Camera-radar deformable attention, result concatenated with LiDAR.
    MdcaCamRadarCatLidar,
    /// Camera-LiDAR deformable attention, result concatenated with radar.
    MdcaCamLidarCatRadar,
    /// LiDAR and radar concatenated first, then attended with the camera.
    MdcaCamOverLidarRadar,
}

impl FusionStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            FusionStrategy::Concat => "concat",
            FusionStrategy::MdcaCamRadarCatLidar => "mdca-cr-cat-l",
            FusionStrategy::MdcaCamLidarCatRadar => "mdca-cl-cat-r",
            FusionStrategy::MdcaCamOverLidarRadar => "mdca-c-lr",
        }
    }

    pub fn parse(s: &str) -> Result<FusionStrategy> {
        match s {
            "concat" => Ok(FusionStrategy::Concat),
            "mdca-cr-cat-l" => Ok(FusionStrategy::MdcaCamRadarCatLidar),
            "mdca-cl-cat-r" => Ok(FusionStrategy::MdcaCamLidarCatRadar),
            "mdca-c-lr" => Ok(FusionStrategy::MdcaCamOverLidarRadar),
            other => Err(ModelError::Config {
                op: "fusion_strategy",
                message: format!("unknown strategy `{other}`"),
            }),
        }
    }
}

/// Declarative fusion description: which modalities exist and how they
/// combine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionPlan {
    pub modalities: ModalitySet,
    pub strategy: FusionStrategy,
    pub heads: usize,
    pub points_per_head: usize,
    pub model_dim: usize,
}

impl FusionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.points_per_head == 0 {
            return Err(ModelError::PlanMismatch(
                "heads and points_per_head must be >= 1".into(),
            ));
        }
        if self.model_dim % self.heads != 0 {
            return Err(ModelError::PlanMismatch(format!(
                "model_dim {} not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if !self.modalities.camera && !self.modalities.radar && !self.modalities.lidar {
            return Err(ModelError::PlanMismatch("no modalities selected".into()));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::PlanMismatch(format!(
                    "strategy {} requires {what}",
                    self.strategy.label()
                )))
            }
        };
        match self.strategy {
            FusionStrategy::Concat => Ok(()),
            FusionStrategy::MdcaCamRadarCatLidar => {
                need(self.modalities.camera, "camera")?;
                need(self.modalities.radar, "radar")
            }
            FusionStrategy::MdcaCamLidarCatRadar => {
                need(self.modalities.camera, "camera")?;
                need(self.modalities.lidar, "lidar")
            }
            FusionStrategy::MdcaCamOverLidarRadar => {
                need(self.modalities.camera, "camera")?;
                need(
                    self.modalities.radar || self.modalities.lidar,
                    "radar or lidar",
                )
            }
        }
    }
}

/// Learned 1x1 compression of concatenated maps: conv + norm + relu.
pub struct ConcatFuse {
    compress: Conv2dLayer,
}

impl ConcatFuse {
    pub fn new(prefix: &str, c_in: usize, c_out: usize, rng: &mut CounterRng) -> ConcatFuse {
        ConcatFuse {
            compress: Conv2dLayer::new(format!("{prefix}.compress"), c_in, c_out, 1, 1, 0, rng),
        }
    }

    pub fn forward(&self, maps: &[&Tensor]) -> Result<Tensor> {
        if maps.is_empty() {
            return Err(ModelError::PlanMismatch("fuse_concat with no maps".into()));
        }
        let spatial = &maps[0].shape()[1..];
        for m in maps {
            if &m.shape()[1..] != spatial {
                return Err(ModelError::Shape {
                    op: "fuse_concat",
                    message: format!("spatial mismatch: {:?} vs {:?}", m.shape(), maps[0].shape()),
                });
            }
        }
        let cat = ops::concat_channels(maps)?;
        let projected = self.compress.forward(&cat)?;
        Ok(ops::relu(&ops::instance_norm(&projected, NORM_EPS)?))
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.compress.collect(params)
    }
}

/// Multimodal deformable cross-attention over BEV maps.
pub struct MdcaLayer {
    pub heads: usize,
    pub points: usize,
    pub model_dim: usize,
    pub head_dim: usize,
    query_proj: LinearLayer,
    offset_head: LinearLayer,
    attn_head: LinearLayer,
    value_proj: Vec<Conv2dLayer>, // per modality, bias-free 1x1 to head_dim
    head_proj: Vec<LinearLayer>,  // per head, bias-free head_dim -> model_dim
}

impl MdcaLayer {
    /// `query_channels`: channel counts of the two query source maps.
    /// `value_channels`: channel count per attended modality map.
    pub fn new(
        prefix: &str,
        query_channels: (usize, usize),
        value_channels: &[usize],
        model_dim: usize,
        heads: usize,
        points: usize,
        rng: &mut CounterRng,
    ) -> Result<MdcaLayer> {
        if model_dim % heads != 0 {
            return Err(ModelError::Config {
                op: "mdca",
                message: format!("model_dim {model_dim} not divisible by {heads} heads"),
            });
        }
        let head_dim = model_dim / heads;
        let m = value_channels.len();
        let q_in = query_channels.0 + query_channels.1;
        let value_proj = value_channels
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Conv2dLayer::new_no_bias(format!("{prefix}.value{i}"), *c, head_dim, 1, 1, 0, rng)
            })
            .collect();
        let head_proj = (0..heads)
            .map(|h| LinearLayer::new_no_bias(format!("{prefix}.head{h}"), head_dim, model_dim, rng))
            .collect();
        Ok(MdcaLayer {
            heads,
            points,
            model_dim,
            head_dim,
            query_proj: LinearLayer::new(format!("{prefix}.query"), q_in, model_dim, rng),
            offset_head: LinearLayer::new_zeroed(
                format!("{prefix}.offsets"),
                model_dim,
                heads * m * points * 2,
            ),
            attn_head: LinearLayer::new_zeroed(
                format!("{prefix}.attn"),
                model_dim,
                heads * m * points,
            ),
            value_proj,
            head_proj,
        })
    }

    /// Reference points of an [nx, nz] grid in map sample coordinates
    /// (x along nz, y along nx), row-major over (ix, iz).
    pub fn reference_points(nx: usize, nz: usize) -> Tensor {
        let mut pts = Vec::with_capacity(nx * nz * 2);
        for ix in 0..nx {
            for iz in 0..nz {
                pts.push(iz as f64);
                pts.push(ix as f64);
            }
        }
        Tensor::from_vec(&[nx * nz, 2], pts).expect("finite reference points")
    }

    /// query sources: two [C, nx, nz] maps; values: M maps [C_m, nx, nz].
    /// Output [model_dim, nx, nz] with a residual from `query_a` when the
    /// channel counts match.
    pub fn forward(&self, query_a: &Tensor, query_b: &Tensor, values: &[&Tensor]) -> Result<Tensor> {
        let (ca, nx, nz) = match query_a.shape() {
            [c, nx, nz] => (*c, *nx, *nz),
            other => {
                return Err(ModelError::Shape {
                    op: "mdca",
                    message: format!("query_a must be [C, nx, nz], got {other:?}"),
                })
            }
        };
        if values.len() != self.value_proj.len() {
            return Err(ModelError::PlanMismatch(format!(
                "mdca built for {} value maps, got {}",
                self.value_proj.len(),
                values.len()
            )));
        }
        let (m, h, k) = (values.len(), self.heads, self.points);
        let n = nx * nz;

        // queries from the flattened concatenation of the two sources
        let cat = ops::concat_channels(&[query_a, query_b])?;
        let cat_flat = ops::reshape(&cat, &[cat.shape()[0], n])?;
        let q2d = ops::transpose2d(&cat_flat)?; // [N, Ca+Cb]
        let zq = self.query_proj.forward(&q2d)?; // [N, C]

        // per-query offsets and attention logits
        let offsets = self.offset_head.forward(&zq)?; // [N, H*M*K*2]
        let logits = self.attn_head.forward(&zq)?; // [N, H*M*K]
        let logits_grouped = ops::reshape(&logits, &[n * h, m * k])?;
        let attn = ops::softmax_rows(&logits_grouped)?;
        let attn_flat = ops::reshape(&attn, &[n, h * m * k])?;

        // pre-project value maps once per modality (commutes exactly with
        // bilinear sampling since the projection is bias-free)
        let projected: Vec<Tensor> = values
            .iter()
            .zip(self.value_proj.iter())
            .map(|(v, proj)| proj.forward(v))
            .collect::<Result<_>>()?;

        let refs = Self::reference_points(nx, nz);
        let mut head_sums: Vec<Option<Tensor>> = vec![None; h];
        for hi in 0..h {
            for mi in 0..m {
                for ki in 0..k {
                    let flat = (hi * m + mi) * k + ki;
                    let off = ops::slice_cols(&offsets, flat * 2, 2)?; // [N, 2]
                    let pts = ops::add(&refs, &off)?;
                    let sampled = ops::bilinear_sample(&projected[mi], &pts)?; // [N, head_dim]
                    let weight = ops::slice_cols(&attn_flat, flat, 1)?; // [N, 1]
                    let weight = ops::reshape(&weight, &[n])?;
                    let weighted = ops::scale_rows(&sampled, &weight)?;
                    head_sums[hi] = Some(match head_sums[hi].take() {
                        None => weighted,
                        Some(acc) => ops::add(&acc, &weighted)?,
                    });
                }
            }
        }

        let mut total: Option<Tensor> = None;
        for (hi, acc) in head_sums.into_iter().enumerate() {
            let acc = acc.expect("head accumulated");
            let out_h = self.head_proj[hi].forward(&acc)?; // [N, C]
            total = Some(match total {
                None => out_h,
                Some(t) => ops::add(&t, &out_h)?,
            });
        }
        let mut total = total.expect("at least one head");

        if ca == self.model_dim {
            let qa_flat = ops::reshape(query_a, &[ca, n])?;
            let qa_rows = ops::transpose2d(&qa_flat)?;
            total = ops::add(&total, &qa_rows)?;
        }

        let out = ops::transpose2d(&total)?; // [C, N]
        Ok(ops::reshape(&out, &[self.model_dim, nx, nz])?)
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.query_proj.collect(params)?;
        self.offset_head.collect(params)?;
        self.attn_head.collect(params)?;
        for v in &self.value_proj {
            v.collect(params)?;
        }
        for p in &self.head_proj {
            p.collect(params)?;
        }
        Ok(())
    }

    /// The offset head's weight tensor (for gradient-flow checks).
    pub fn offset_weight(&self) -> &Tensor {
        &self.offset_head.weight
    }
}

/// Residual BEV encoder: full-resolution residual block, a strided branch,
/// and an upsampled skip merge. Preserves [C, nx, nz].
pub struct BevEncoder {
    block: ResidualBlock,
    down: ConvBlock,
    up_proj: Conv2dLayer,
    fuse: Conv2dLayer,
}

impl BevEncoder {
    pub fn new(prefix: &str, channels: usize, rng: &mut CounterRng) -> BevEncoder {
        let wide = channels * 2;
        BevEncoder {
            block: ResidualBlock::new(&format!("{prefix}.block"), channels, rng),
            down: ConvBlock::new(format!("{prefix}.down"), channels, wide, 3, 2, 1, rng),
            up_proj: Conv2dLayer::new(format!("{prefix}.up"), wide, channels, 1, 1, 0, rng),
            fuse: Conv2dLayer::new(format!("{prefix}.fuse"), channels, channels, 1, 1, 0, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (nx, nz) = match x.shape() {
            [_, nx, nz] => (*nx, *nz),
            other => {
                return Err(ModelError::Shape {
                    op: "bev_encoder",
                    message: format!("expected [C, nx, nz], got {other:?}"),
                })
            }
        };
        let full = self.block.forward(x)?;
        let low = self.down.forward(&full)?;
        let up = ops::upsample_nearest2x(&self.up_proj.forward(&low)?)?;
        // odd extents: strided down then 2x up overshoots by one
        let up = ops::crop2d(&up, nx, nz)?;
        let merged = ops::add(&full, &up)?;
        let fused = self.fuse.forward(&merged)?;
        Ok(ops::relu(&ops::instance_norm(&fused, NORM_EPS)?))
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.block.collect(params)?;
        self.down.collect(params)?;
        self.up_proj.collect(params)?;
        self.fuse.collect(params)
    }
}

/// Complete fusion module for one plan: strategy dispatch plus BEV encoder.
pub struct FusionModule {
    pub plan: FusionPlan,
    mdca: Option<MdcaLayer>,
    post_cat: Option<ConcatFuse>,
    encoder: BevEncoder,
}

impl FusionModule {
    /// Channel counts of the present modality maps; zero when absent.
    pub fn new(
        prefix: &str,
        plan: FusionPlan,
        cam_channels: usize,
        radar_channels: usize,
        lidar_channels: usize,
        rng: &mut CounterRng,
    ) -> Result<FusionModule> {
        plan.validate()?;
        let c = plan.model_dim;
        let mods = plan.modalities;
        let (mdca, post_in) = match plan.strategy {
            FusionStrategy::Concat => {
                let mut total = 0;
                if mods.camera {
                    total += cam_channels;
                }
                if mods.radar {
                    total += radar_channels;
                }
                if mods.lidar {
                    total += lidar_channels;
                }
                (None, total)
            }
            FusionStrategy::MdcaCamRadarCatLidar => {
                let layer = MdcaLayer::new(
                    &format!("{prefix}.mdca"),
                    (cam_channels, radar_channels),
                    &[cam_channels, radar_channels],
                    c,
                    plan.heads,
                    plan.points_per_head,
                    rng,
                )?;
                let post = c + if mods.lidar { lidar_channels } else { 0 };
                (Some(layer), post)
            }
            FusionStrategy::MdcaCamLidarCatRadar => {
                let layer = MdcaLayer::new(
                    &format!("{prefix}.mdca"),
                    (cam_channels, lidar_channels),
                    &[cam_channels, lidar_channels],
                    c,
                    plan.heads,
                    plan.points_per_head,
                    rng,
                )?;
                let post = c + if mods.radar { radar_channels } else { 0 };
                (Some(layer), post)
            }
            FusionStrategy::MdcaCamOverLidarRadar => {
                let lr = (if mods.lidar { lidar_channels } else { 0 })
                    + (if mods.radar { radar_channels } else { 0 });
                let layer = MdcaLayer::new(
                    &format!("{prefix}.mdca"),
                    (cam_channels, lr),
                    &[cam_channels, lr],
                    c,
                    plan.heads,
                    plan.points_per_head,
                    rng,
                )?;
                (Some(layer), c)
            }
        };
        let post_cat = Some(ConcatFuse::new(&format!("{prefix}.fuse"), post_in, c, rng));
        Ok(FusionModule {
            plan,
            mdca,
            post_cat,
            encoder: BevEncoder::new(&format!("{prefix}.encoder"), c, rng),
        })
    }

    /// Maps must be present exactly for the plan's modalities.
    pub fn forward(
        &self,
        cam: Option<&Tensor>,
        radar: Option<&Tensor>,
        lidar: Option<&Tensor>,
    ) -> Result<Tensor> {
        let mods = self.plan.modalities;
        let check = |have: bool, want: bool, name: &str| {
            if want && !have {
                return Err(ModelError::PlanMismatch(format!("plan needs {name} map")));
            }
            Ok(())
        };
        check(cam.is_some(), mods.camera, "camera")?;
        check(radar.is_some(), mods.radar, "radar")?;
        check(lidar.is_some(), mods.lidar, "lidar")?;

        let fused = match self.plan.strategy {
            FusionStrategy::Concat => {
                let mut maps: Vec<&Tensor> = Vec::new();
                if mods.camera {
                    maps.push(cam.unwrap());
                }
                if mods.radar {
                    maps.push(radar.unwrap());
                }
                if mods.lidar {
                    maps.push(lidar.unwrap());
                }
                self.post_cat.as_ref().unwrap().forward(&maps)?
            }
            FusionStrategy::MdcaCamRadarCatLidar => {
                let (c, r) = (cam.unwrap(), radar.unwrap());
                let att = self.mdca.as_ref().unwrap().forward(c, r, &[c, r])?;
                let mut maps: Vec<&Tensor> = vec![&att];
                if mods.lidar {
                    maps.push(lidar.unwrap());
                }
                self.post_cat.as_ref().unwrap().forward(&maps)?
            }
            FusionStrategy::MdcaCamLidarCatRadar => {
                let (c, l) = (cam.unwrap(), lidar.unwrap());
                let att = self.mdca.as_ref().unwrap().forward(c, l, &[c, l])?;
                let mut maps: Vec<&Tensor> = vec![&att];
                if mods.radar {
                    maps.push(radar.unwrap());
                }
                self.post_cat.as_ref().unwrap().forward(&maps)?
            }
            FusionStrategy::MdcaCamOverLidarRadar => {
                let c = cam.unwrap();
                let mut lr_parts: Vec<&Tensor> = Vec::new();
                if mods.lidar {
                    lr_parts.push(lidar.unwrap());
                }
                if mods.radar {
                    lr_parts.push(radar.unwrap());
                }
                let lr = ops::concat_channels(&lr_parts)?;
                let att = self.mdca.as_ref().unwrap().forward(c, &lr, &[c, &lr])?;
                self.post_cat.as_ref().unwrap().forward(&[&att])?
            }
        };
        self.encoder.forward(&fused)
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        if let Some(m) = &self.mdca {
            m.collect(params)?;
        }
        if let Some(p) = &self.post_cat {
            p.collect(params)?;
        }
        self.encoder.collect(params)
    }

    pub fn mdca(&self) -> Option<&MdcaLayer> {
        self.mdca.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> CounterRng {
        CounterRng::new(23)
    }

    #[test]
    fn plan_validation() {
        let mut plan = FusionPlan {
            modalities: ModalitySet::ALL,
            strategy: FusionStrategy::MdcaCamRadarCatLidar,
            heads: 2,
            points_per_head: 2,
            model_dim: 16,
        };
        plan.validate().unwrap();
        plan.modalities.radar = false;
        assert!(plan.validate().is_err());
        plan.modalities.radar = true;
        plan.model_dim = 15;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn concat_fuse_shape_contract() {
        let mut r = rng();
        let fuse = ConcatFuse::new("f", 16 + 8 + 16, 32, &mut r);
        let a = Tensor::full(&[16, 5, 5], 0.3);
        let b = Tensor::full(&[8, 5, 5], -0.4);
        let c = Tensor::full(&[16, 5, 5], 0.9);
        let out = fuse.forward(&[&a, &b, &c]).unwrap();
        assert_eq!(out.shape(), &[32, 5, 5]);
    }

    #[test]
    fn concat_fuse_spatial_mismatch_is_error() {
        let mut r = rng();
        let fuse = ConcatFuse::new("f", 4, 8, &mut r);
        let a = Tensor::zeros(&[2, 5, 5]);
        let b = Tensor::zeros(&[2, 4, 5]);
        assert!(fuse.forward(&[&a, &b]).is_err());
    }

    #[test]
    fn concat_fuse_permuted_inputs_with_permuted_weights_match() {
        let mut r = rng();
        let fuse_ab = ConcatFuse::new("f", 5, 6, &mut r);
        let a = Tensor::from_vec(&[2, 3, 3], (0..18).map(|i| i as f64 * 0.1).collect()).unwrap();
        let b = Tensor::from_vec(&[3, 3, 3], (0..27).map(|i| (i as f64).sin()).collect()).unwrap();
        let out_ab = fuse_ab.forward(&[&a, &b]).unwrap();

        // permute modality order and permute the compression weight's input
        // channels accordingly: [A(2), B(3)] -> [B(3), A(2)]
        let w = fuse_ab.compress.weight.to_vec(); // [6, 5, 1, 1]
        let mut w_perm = vec![0.0; w.len()];
        for o in 0..6 {
            for i in 0..5 {
                let src = if i < 3 { 2 + i } else { i - 3 };
                w_perm[o * 5 + i] = w[o * 5 + src];
            }
        }
        let fuse_ba = ConcatFuse {
            compress: Conv2dLayer {
                name: "g.compress".into(),
                weight: Tensor::leaf(&[6, 5, 1, 1], w_perm).unwrap(),
                bias: Some(Tensor::leaf(&[6], fuse_ab.compress.bias.as_ref().unwrap().to_vec()).unwrap()),
                stride: 1,
                padding: 0,
            },
        };
        let out_ba = fuse_ba.forward(&[&b, &a]).unwrap();
        for (x, y) in out_ab.to_vec().iter().zip(out_ba.to_vec().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bev_encoder_preserves_shape() {
        let mut r = rng();
        let enc = BevEncoder::new("enc", 8, &mut r);
        let x = Tensor::full(&[8, 20, 20], 0.5);
        assert_eq!(enc.forward(&x).unwrap().shape(), &[8, 20, 20]);
        // odd extent exercises the crop path
        let x = Tensor::full(&[8, 13, 13], 0.5);
        assert_eq!(enc.forward(&x).unwrap().shape(), &[8, 13, 13]);
    }

    #[test]
    fn bev_encoder_zero_input_zero_output() {
        let mut r = rng();
        let enc = BevEncoder::new("enc", 4, &mut r);
        let out = enc.forward(&Tensor::zeros(&[4, 10, 10])).unwrap();
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mdca_constant_maps_give_constant_output() {
        // offsets zero-initialized and attention uniform at init: constant
        // value maps must produce a spatially constant output
        let mut r = rng();
        let layer = MdcaLayer::new("m", (4, 3), &[4, 3], 8, 2, 2, &mut r).unwrap();
        let qa = Tensor::full(&[4, 5, 5], 0.7);
        let qb = Tensor::full(&[3, 5, 5], -0.2);
        let out = layer.forward(&qa, &qb, &[&qa, &qb]).unwrap();
        assert_eq!(out.shape(), &[8, 5, 5]);
        let v = out.to_vec();
        for ch in 0..8 {
            let first = v[ch * 25];
            for cell in 0..25 {
                assert!(
                    (v[ch * 25 + cell] - first).abs() < 1e-9,
                    "channel {ch} cell {cell}: {} vs {first}",
                    v[ch * 25 + cell]
                );
            }
        }
    }

    #[test]
    fn mdca_offset_gradients_flow() {
        let mut r = rng();
        let layer = MdcaLayer::new("m", (4, 2), &[4, 2], 4, 2, 2, &mut r).unwrap();
        let qa_data: Vec<f64> = (0..4 * 36).map(|_| r.uniform_in(-1.0, 1.0)).collect();
        let qb_data: Vec<f64> = (0..2 * 36).map(|_| r.uniform_in(-1.0, 1.0)).collect();
        let qa = Tensor::from_vec(&[4, 6, 6], qa_data).unwrap();
        let qb = Tensor::from_vec(&[2, 6, 6], qb_data).unwrap();
        let out = layer.forward(&qa, &qb, &[&qa, &qb]).unwrap();
        ops::sum_all(&ops::mul(&out, &out).unwrap()).backward();
        let g = layer.offset_weight().grad().expect("offset weight gradient");
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "offset gradient norm is zero");
    }

    #[test]
    fn mdca_zero_offsets_translation_equivariant_interior() {
        // translate all maps by one cell in x and z: with zero offsets the
        // output must translate identically on the interior
        let mut r = rng();
        let n = 6;
        let layer = MdcaLayer::new("m", (3, 2), &[3, 2], 6, 2, 2, &mut r).unwrap();

        let make = |ch: usize, r: &mut CounterRng| -> Vec<f64> {
            (0..ch * n * n).map(|_| r.uniform_in(-1.0, 1.0)).collect()
        };
        let qa_data = make(3, &mut r);
        let qb_data = make(2, &mut r);
        let shift = |data: &[f64], ch: usize| -> Vec<f64> {
            let mut out = vec![0.0; data.len()];
            for c in 0..ch {
                for ix in 1..n {
                    for iz in 1..n {
                        out[(c * n + ix) * n + iz] = data[(c * n + ix - 1) * n + iz - 1];
                    }
                }
            }
            out
        };
        let qa = Tensor::from_vec(&[3, n, n], qa_data.clone()).unwrap();
        let qb = Tensor::from_vec(&[2, n, n], qb_data.clone()).unwrap();
        let qa_s = Tensor::from_vec(&[3, n, n], shift(&qa_data, 3)).unwrap();
        let qb_s = Tensor::from_vec(&[2, n, n], shift(&qb_data, 2)).unwrap();

        let out = layer.forward(&qa, &qb, &[&qa, &qb]).unwrap().to_vec();
        let out_s = layer.forward(&qa_s, &qb_s, &[&qa_s, &qb_s]).unwrap().to_vec();
        for c in 0..6 {
            for ix in 1..n {
                for iz in 1..n {
                    let a = out[(c * n + ix - 1) * n + iz - 1];
                    let b = out_s[(c * n + ix) * n + iz];
                    assert!((a - b).abs() < 1e-9, "({c},{ix},{iz}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn run_fusion_camera_only_concat() {
        let mut r = rng();
        let plan = FusionPlan {
            modalities: ModalitySet::CAMERA,
            strategy: FusionStrategy::Concat,
            heads: 2,
            points_per_head: 2,
            model_dim: 8,
        };
        let module = FusionModule::new("f", plan, 6, 0, 0, &mut r).unwrap();
        let cam = Tensor::full(&[6, 7, 7], 0.3);
        let out = module.forward(Some(&cam), None, None).unwrap();
        assert_eq!(out.shape(), &[8, 7, 7]);
    }

    #[test]
    fn run_fusion_missing_map_is_error() {
        let mut r = rng();
        let plan = FusionPlan {
            modalities: ModalitySet::ALL,
            strategy: FusionStrategy::Concat,
            heads: 1,
            points_per_head: 1,
            model_dim: 8,
        };
        let module = FusionModule::new("f", plan, 6, 16, 2, &mut r).unwrap();
        let cam = Tensor::zeros(&[6, 7, 7]);
        assert!(module.forward(Some(&cam), None, None).is_err());
    }

    #[test]
    fn all_strategies_distinct_outputs_same_shape() {
        let mut r = rng();
        let (cam_c, rad_c, lid_c, dim, n) = (6, 4, 2, 8, 6);
        let cam = Tensor::from_vec(&[cam_c, n, n], (0..cam_c * n * n).map(|i| ((i * 7 % 13) as f64) * 0.1 - 0.5).collect()).unwrap();
        let rad = Tensor::from_vec(&[rad_c, n, n], (0..rad_c * n * n).map(|i| ((i * 5 % 11) as f64) * 0.1 - 0.4).collect()).unwrap();
        let lid = Tensor::from_vec(&[lid_c, n, n], (0..lid_c * n * n).map(|i| ((i * 3 % 7) as f64) * 0.2 - 0.3).collect()).unwrap();
        let strategies = [
            FusionStrategy::Concat,
            FusionStrategy::MdcaCamRadarCatLidar,
            FusionStrategy::MdcaCamLidarCatRadar,
            FusionStrategy::MdcaCamOverLidarRadar,
        ];
        let mut outputs: Vec<Vec<f64>> = Vec::new();
        for s in strategies {
            let plan = FusionPlan {
                modalities: ModalitySet::ALL,
                strategy: s,
                heads: 2,
                points_per_head: 2,
                model_dim: dim,
            };
            let module = FusionModule::new("f", plan, cam_c, rad_c, lid_c, &mut r).unwrap();
            let out = module
                .forward(Some(&cam), Some(&rad), Some(&lid))
                .unwrap();
            assert_eq!(out.shape(), &[dim, n, n]);
            outputs.push(out.to_vec());
        }
        for i in 0..outputs.len() {
            for j in i + 1..outputs.len() {
                let max_diff = outputs[i]
                    .iter()
                    .zip(outputs[j].iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(max_diff > 0.0, "strategies {i} and {j} identical");
            }
        }
    }

    #[test]
    fn fixed_seed_fusion_is_reproducible() {
        let build_and_run = || {
            let mut r = CounterRng::new(99);
            let plan = FusionPlan {
                modalities: ModalitySet::ALL,
                strategy: FusionStrategy::MdcaCamRadarCatLidar,
                heads: 2,
                points_per_head: 2,
                model_dim: 8,
            };
            let module = FusionModule::new("f", plan, 4, 4, 2, &mut r).unwrap();
            let cam = Tensor::full(&[4, 5, 5], 0.2);
            let rad = Tensor::full(&[4, 5, 5], -0.1);
            let lid = Tensor::full(&[2, 5, 5], 1.0);
            module
                .forward(Some(&cam), Some(&rad), Some(&lid))
                .unwrap()
                .to_vec()
        };
        let a = build_and_run();
        let b = build_and_run();
        assert_eq!(a, b);
    }
}
