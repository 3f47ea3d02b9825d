//! End-to-end gradient probing: finite differences through the entire
//! two-frame pipeline against the recorded backward pass, on a micro
//! configuration (2 cameras, 32x32 images, 20x20 grid).

use bevmos_synth::{generate, Condition, Dataset, SceneSpec};
use bevmos_tensor::gradcheck::{compare, GradCheckReport};
use bevmos_tensor::CounterRng;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{prepare, BevMosModel};

pub fn micro_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = seed;
    cfg.grid_nx = 20;
    cfg.grid_ny = 2;
    cfg.grid_nz = 20;
    cfg.backbone_channels = [4, 4, 6, 8];
    cfg.neck_channels = 4;
    cfg.model_dim = 8;
    cfg.decode_hidden = 4;
    cfg.heads = 2;
    cfg.points_per_head = 2;
    cfg.corr_k = 1;
    cfg.corr_d = 1;
    cfg
}

pub fn micro_scene_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        num_frames: 2,
        num_boxes: 5,
        moving_fraction: 0.6,
        ego_speed_mps: 3.0,
        condition: Condition::Day,
        num_cams: 2,
        image_size: (32, 32),
        lidar_points_per_box: 5,
        radar_points_per_box: 2,
        ground_points_per_sweep: 30,
    }
}

/// Probe `n_params` randomly chosen parameter elements of the end-to-end
/// loss with central differences.
pub fn end_to_end_gradcheck(seed: u64, n_params: usize, step: f64) -> Result<GradCheckReport> {
    let cfg = micro_config(seed);
    let scene = generate(&micro_scene_spec(seed ^ 0x5c3))?;
    let dataset = Dataset {
        frames: scene.frames,
        scene_of: vec![0; 2],
    };
    let data = prepare(&dataset, &cfg)?;
    let model = BevMosModel::new(&cfg)?;
    let pair = &data.pairs[0];

    let loss_of = |model: &BevMosModel| -> Result<f64> {
        Ok(model
            .pair_loss(
                &data.frames[pair.prev],
                &data.frames[pair.curr],
                pair.warp_points.as_ref(),
            )?
            .item())
    };

    // analytic gradients from one backward pass
    model.params().zero_grads();
    model
        .pair_loss(
            &data.frames[pair.prev],
            &data.frames[pair.curr],
            pair.warp_points.as_ref(),
        )?
        .backward();

    // deterministic random probe over (parameter, element) slots
    let mut rng = CounterRng::new(seed).derive(0x9add);
    let mut analytic = Vec::with_capacity(n_params);
    let mut numeric = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let pi = rng.below(model.params().len());
        let param = &model.params().as_slice()[pi];
        let ei = rng.below(param.tensor.numel());
        let grad = param.tensor.grad().expect("gradient reached parameter")[ei];

        let mut values = param.tensor.to_vec();
        let orig = values[ei];
        values[ei] = orig + step;
        param.tensor.set_data(&values)?;
        let hi = loss_of(&model)?;
        values[ei] = orig - step;
        param.tensor.set_data(&values)?;
        let lo = loss_of(&model)?;
        values[ei] = orig;
        param.tensor.set_data(&values)?;

        analytic.push(grad);
        numeric.push((hi - lo) / (2.0 * step));
    }
    Ok(compare(&analytic, &numeric))
}
