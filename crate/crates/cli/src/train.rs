//! Two-frame training loop: Adam on mean BCE over random consecutive-frame
//! pairs. Batch sampling derives from (seed, iteration), so resuming from a
//! checkpoint replays the exact same batches.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bevmos_tensor::{ops, CounterRng, Tensor};
use bevmos_synth::read_dataset;

use crate::config::ExperimentConfig;
use crate::error::{io_err, HarnessError, Result};
use crate::pipeline::{prepare, PreparedData, TrainState};

pub struct TrainSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub losses: Vec<(usize, f64)>,
    pub checkpoint: PathBuf,
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    let state = TrainState::new(cfg)?;
    train_from(cfg, state)
}

pub fn train_resumed(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<TrainSummary> {
    let state = TrainState::load(cfg, checkpoint)?;
    train_from(cfg, state)
}

fn batch_indices(seed: u64, iteration: usize, batch: usize, n_pairs: usize) -> Vec<usize> {
    let mut rng = CounterRng::new(seed).derive(0xba7c).derive(iteration as u64);
    (0..batch).map(|_| rng.below(n_pairs)).collect()
}

fn train_from(cfg: &ExperimentConfig, mut state: TrainState) -> Result<TrainSummary> {
    cfg.validate()?;
    let dataset = read_dataset(&cfg.dataset)?;
    let data = prepare(&dataset, cfg)?;
    if data.pairs.is_empty() {
        return Err(HarnessError::Config(
            "dataset has no consecutive-frame pairs".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;

    let mut losses: Vec<(usize, f64)> = Vec::with_capacity(cfg.iterations);
    while state.iteration < cfg.iterations {
        let iter = state.iteration;
        let indices = batch_indices(state.seed, iter, cfg.batch_size, data.pairs.len());
        let loss = step(&mut state, &data, &indices)?;
        if !loss.is_finite() {
            let dump = cfg.out_dir.join("nan_dump.txt");
            let mut text = format!("iteration = {iter}\nloss = {loss}\npairs = {indices:?}\n");
            for &pi in &indices {
                let p = &data.pairs[pi];
                let _ = writeln!(
                    text,
                    "pair {pi}: prev={} curr={} gt_positives={}",
                    p.prev,
                    p.curr,
                    data.frames[p.curr].gt.positives()
                );
            }
            std::fs::write(&dump, text).map_err(io_err(&dump))?;
            return Err(HarnessError::NanLoss {
                iteration: iter,
                dump,
            });
        }
        losses.push((iter, loss));
        state.iteration += 1;
        if cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0 {
            state.save(&cfg.out_dir.join(format!("checkpoint_{:06}.bmos", state.iteration)))?;
        }
    }

    let checkpoint = cfg.out_dir.join("checkpoint_final.bmos");
    state.save(&checkpoint)?;
    write_loss_curve(&cfg.out_dir, &losses)?;

    Ok(TrainSummary {
        initial_loss: losses.first().map(|(_, l)| *l).unwrap_or(f64::NAN),
        final_loss: losses.last().map(|(_, l)| *l).unwrap_or(f64::NAN),
        losses,
        checkpoint,
    })
}

/// One optimizer step over a batch of pair indices. Returns the batch loss.
fn step(state: &mut TrainState, data: &PreparedData, indices: &[usize]) -> Result<f64> {
    let mut total: Option<Tensor> = None;
    for &pi in indices {
        let pair = &data.pairs[pi];
        let loss = state.model.pair_loss(
            &data.frames[pair.prev],
            &data.frames[pair.curr],
            pair.warp_points.as_ref(),
        )?;
        total = Some(match total {
            None => loss,
            Some(acc) => ops::add(&acc, &loss)?,
        });
    }
    let total = ops::scale(&total.expect("non-empty batch"), 1.0 / indices.len() as f64);
    let value = total.item();
    if value.is_finite() {
        state.model.params().zero_grads();
        total.backward();
        state.optimizer.step(state.model.params().as_slice())?;
    }
    Ok(value)
}

fn write_loss_curve(out_dir: &Path, losses: &[(usize, f64)]) -> Result<()> {
    let mut text = String::from("# iteration loss\n");
    for (i, l) in losses {
        let _ = writeln!(text, "{i} {l:.12}");
    }
    let txt_path = out_dir.join("loss_curve.txt");
    std::fs::write(&txt_path, text).map_err(io_err(&txt_path))?;

    let json: Vec<serde_json::Value> = losses
        .iter()
        .map(|(i, l)| serde_json::json!({"iteration": i, "loss": l}))
        .collect();
    let json_path = out_dir.join("loss_curve.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&json).expect("loss curve serializes"),
    )
    .map_err(io_err(&json_path))?;
    Ok(())
}
