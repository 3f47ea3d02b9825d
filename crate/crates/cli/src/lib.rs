//! Experiment harness for BEV moving-object segmentation: configuration,
//! dataset generation, training, evaluation, ablation sweeps, rendering, and
//! end-to-end gradient checking.

pub mod ablate;
pub mod config;
mod error;
pub mod eval;
pub mod gen;
pub mod gradcheck_cmd;
pub mod pipeline;
pub mod render;
pub mod train;

pub use error::{HarnessError, Result};
