use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bevmos_cli::ablate::{ablation_matrix, write_table, AblationAxes};
use bevmos_cli::config::{parse_modalities, ExperimentConfig};
use bevmos_cli::eval::{evaluate, report_to_text, write_report};
use bevmos_cli::gen::{generate_dataset, GenSpec};
use bevmos_cli::gradcheck_cmd::end_to_end_gradcheck;
use bevmos_cli::pipeline::{prepare, TrainState};
use bevmos_cli::render::render_bev;
use bevmos_cli::train::{train, train_resumed};
use bevmos_model::fusion::FusionStrategy;
use bevmos_synth::read_dataset;

#[derive(Parser)]
#[command(name = "bevmos", about = "BEV moving-object segmentation workbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// experiment config file (flat key = value text)
    #[arg(long)]
    config: Option<PathBuf>,
    /// override a config key, e.g. --set fusion=mdca-cr-cat-l (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> bevmos_cli::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        scenes: usize,
        #[arg(long, default_value_t = 10)]
        frames_per_scene: usize,
        #[arg(long, default_value_t = 12)]
        boxes: usize,
        #[arg(long, default_value_t = 0.6)]
        moving_fraction: f64,
        #[arg(long, default_value_t = 4.0)]
        ego_speed: f64,
        #[arg(long, default_value_t = 2)]
        cams: usize,
        #[arg(long, default_value_t = 32)]
        image_h: usize,
        #[arg(long, default_value_t = 64)]
        image_w: usize,
        #[arg(long, default_value_t = 6)]
        lidar_points_per_box: usize,
        #[arg(long, default_value_t = 2)]
        radar_points_per_box: usize,
        #[arg(long, default_value_t = 60)]
        ground_points: usize,
        /// scene condition mix day,rain,night (sums to 1)
        #[arg(long, default_value = "0.7,0.15,0.15")]
        conditions: String,
    },
    /// Train a model per the experiment config
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// resume from a training-state checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Render a BEV prediction/ground-truth image for one eval pair
    Render {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// pair index within the dataset (consecutive frames of a scene)
        #[arg(long, default_value_t = 0)]
        pair: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        upscale: usize,
    },
    /// Train/evaluate a grid of modality, fusion, and sweep combinations
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        eval_dataset: PathBuf,
        /// semicolon-separated modality sets, e.g. "C;C+R;C+L;C+R+L"
        #[arg(long, default_value = "C+R+L")]
        modalities: String,
        /// semicolon-separated strategies
        #[arg(long, default_value = "concat")]
        strategies: String,
        /// comma-separated sweep counts
        #[arg(long, default_value = "5")]
        sweeps: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the end-to-end loss gradient
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
}

fn run() -> bevmos_cli::Result<()> {
    match Cli::parse().command {
        Command::Gen {
            out,
            seed,
            scenes,
            frames_per_scene,
            boxes,
            moving_fraction,
            ego_speed,
            cams,
            image_h,
            image_w,
            lidar_points_per_box,
            radar_points_per_box,
            ground_points,
            conditions,
        } => {
            let parts: Vec<f64> = conditions
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    bevmos_cli::HarnessError::Config(format!("bad condition mix `{conditions}`"))
                })?;
            if parts.len() != 3 {
                return Err(bevmos_cli::HarnessError::Config(
                    "conditions needs day,rain,night fractions".into(),
                ));
            }
            let spec = GenSpec {
                seed,
                scenes,
                frames_per_scene,
                boxes,
                moving_fraction,
                ego_speed_mps: ego_speed,
                num_cams: cams,
                image_size: (image_h, image_w),
                lidar_points_per_box,
                radar_points_per_box,
                ground_points_per_sweep: ground_points,
                condition_mix: (parts[0], parts[1], parts[2]),
            };
            generate_dataset(&out, &spec)?;
            println!(
                "wrote {} scenes x {} frames to {}",
                scenes,
                frames_per_scene,
                out.display()
            );
        }
        Command::Train { config, resume } => {
            let cfg = config.resolve()?;
            let summary = match resume {
                Some(ckpt) => train_resumed(&cfg, &ckpt)?,
                None => train(&cfg)?,
            };
            println!(
                "trained {} iterations: loss {:.6} -> {:.6}; checkpoint {}",
                cfg.iterations,
                summary.initial_loss,
                summary.final_loss,
                summary.checkpoint.display()
            );
        }
        Command::Eval {
            config,
            checkpoint,
            dataset,
        } => {
            let cfg = config.resolve()?;
            let report = evaluate(&cfg, &checkpoint, &dataset)?;
            write_report(&cfg, &report)?;
            print!("{}", report_to_text(&report));
            println!("report written to {}", cfg.out_dir.display());
        }
        Command::Render {
            config,
            checkpoint,
            dataset,
            pair,
            out,
            upscale,
        } => {
            let cfg = config.resolve()?;
            let state = TrainState::load(&cfg, &checkpoint)?;
            let ds = read_dataset(&dataset)?;
            let mut eval_cfg = cfg.clone();
            eval_cfg.dataset = dataset.clone();
            let data = prepare(&ds, &eval_cfg)?;
            let p = data.pairs.get(pair).ok_or_else(|| {
                bevmos_cli::HarnessError::Config(format!(
                    "pair {pair} out of range ({} pairs)",
                    data.pairs.len()
                ))
            })?;
            let output = state.model.forward_pair(
                &data.frames[p.prev],
                &data.frames[p.curr],
                p.warp_points.as_ref(),
            )?;
            render_bev(&output.probs, &data.frames[p.curr].gt, &out, upscale)?;
            println!("wrote {}", out.display());
        }
        Command::Ablate {
            config,
            eval_dataset,
            modalities,
            strategies,
            sweeps,
            out,
        } => {
            let cfg = config.resolve()?;
            let axes = AblationAxes {
                modalities: modalities
                    .split(';')
                    .map(parse_modalities)
                    .collect::<bevmos_cli::Result<_>>()?,
                strategies: strategies
                    .split(';')
                    .map(|s| FusionStrategy::parse(s.trim()).map_err(Into::into))
                    .collect::<bevmos_cli::Result<_>>()?,
                sweep_counts: sweeps
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<usize>().map_err(|_| {
                            bevmos_cli::HarnessError::Config(format!("bad sweep count `{s}`"))
                        })
                    })
                    .collect::<bevmos_cli::Result<_>>()?,
            };
            let rows = ablation_matrix(&cfg, &axes, &eval_dataset)?;
            write_table(&out, &rows)?;
            print!("{}", bevmos_cli::ablate::table_to_text(&rows));
            println!("table written to {}", out.display());
        }
        Command::Gradcheck { seeds, probes } => {
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                let report = end_to_end_gradcheck(seed, probes, 1e-6)?;
                println!(
                    "seed {seed}: max rel err {:.3e} over {} probes",
                    report.max_rel_err, report.checked
                );
                worst = worst.max(report.max_rel_err);
            }
            if worst >= 1e-3 {
                return Err(bevmos_cli::HarnessError::Other(format!(
                    "gradient check failed: max rel err {worst:.3e} >= 1e-3"
                )));
            }
            println!("gradient check passed (worst {worst:.3e})");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
