//! Moving-object segmentation in bird's-eye view from camera, LiDAR, and
//! radar.
//!
//! The pipeline: per-sensor BEV encoding (image backbone + neck + geometric
//! lifting, LiDAR occupancy, radar rasterization), sensor fusion (plain
//! concatenation or multimodal deformable cross-attention), a residual BEV
//! encoder, patch correlation between consecutive frames for motion cues,
//! and a small convolutional decoder producing per-cell moving-vehicle
//! probabilities.

pub mod correlation;
pub mod encoders;
mod error;
pub mod fusion;
pub mod geometry;
pub mod head;
pub mod layers;
pub mod metrics;

pub use error::{ModelError, Result};
