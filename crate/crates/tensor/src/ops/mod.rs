//! Differentiable primitive operations.
//!
//! Each op computes its result eagerly and records an analytic backward
//! closure on the produced tensor. Shapes are validated up front and return
//! structured errors; the backward paths assume the shapes an op itself
//! produced.

mod conv;
mod elementwise;
mod matmul;
mod sample;
mod shape;

pub use conv::{conv2d, instance_norm, upsample_nearest2x};
pub use elementwise::{
    add, bce_mean, mean_all, mul, relu, scale, scale_rows, sigmoid, sub, sum_all,
};
pub use matmul::{linear, softmax_rows, transpose2d};
pub use sample::bilinear_sample;
pub use shape::{concat_channels, crop2d, permute, reshape, rows_scatter, slice_cols};
