//! Segmentation decoder and loss: a 3x3 conv, a 1x1 conv to a single logit
//! channel, sigmoid, and mean binary cross-entropy.

use bevmos_tensor::{ops, CounterRng, ParamSet, Tensor};

use crate::error::{ModelError, Result};
use crate::layers::Conv2dLayer;
use crate::metrics::GtMask;

pub const BCE_EPS: f64 = 1e-7;

/// Per-cell moving-object prediction.
pub struct SegmentationOutput {
    pub logits: Tensor, // [1, nx, nz]
    pub probs: Tensor,  // sigmoid(logits)
}

pub struct Decoder {
    conv: Conv2dLayer,
    project: Conv2dLayer,
}

impl Decoder {
    pub fn new(prefix: &str, c_in: usize, hidden: usize, rng: &mut CounterRng) -> Decoder {
        Decoder {
            conv: Conv2dLayer::new(format!("{prefix}.conv"), c_in, hidden, 3, 1, 1, rng),
            project: Conv2dLayer::new(format!("{prefix}.project"), hidden, 1, 1, 1, 0, rng),
        }
    }

    pub fn forward(&self, motion_feat: &Tensor) -> Result<SegmentationOutput> {
        let x = ops::relu(&self.conv.forward(motion_feat)?);
        let logits = self.project.forward(&x)?;
        let probs = ops::sigmoid(&logits);
        Ok(SegmentationOutput { logits, probs })
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.conv.collect(params)?;
        self.project.collect(params)
    }
}

/// Mean BCE between predicted probabilities and a binary ground-truth mask.
pub fn bce_loss(probs: &Tensor, gt: &GtMask) -> Result<Tensor> {
    if probs.numel() != gt.mask.len() {
        return Err(ModelError::Shape {
            op: "bce_loss",
            message: format!(
                "{} probabilities vs {} mask cells",
                probs.numel(),
                gt.mask.len()
            ),
        });
    }
    Ok(ops::bce_mean(probs, &gt.mask, BCE_EPS)?)
}
