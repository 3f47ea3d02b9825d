//! Adam with decoupled L2 weight decay. Moment buffers persist across steps
//! and are exposed for exact checkpoint round-trips.

use crate::error::{Result, TensorError};
use crate::param::Parameter;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            weight_decay: 1e-7,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    pub cfg: AdamConfig,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[Parameter]) -> Adam {
        Adam {
            cfg,
            step_count: 0,
            m: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over all parameters. Every parameter must carry a gradient.
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "optimizer/parameter mismatch");
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (i, p) in params.iter().enumerate() {
            let grad = p.tensor.grad().ok_or_else(|| TensorError::MissingGrad {
                name: p.name.clone(),
            })?;
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            p.tensor.update_data(|data| {
                for j in 0..data.len() {
                    let g = grad[j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    data[j] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * data[j]);
                }
            });
        }
        Ok(())
    }

    /// Moment buffers for checkpointing, in parameter order.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restore moments and step counter from a checkpoint.
    pub fn restore(&mut self, step_count: u64, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::InvalidArgument {
                op: "adam_restore",
                message: format!(
                    "moment count mismatch: have {}, checkpoint {}",
                    self.m.len(),
                    m.len()
                ),
            });
        }
        for (have, got) in self.m.iter().zip(m.iter()) {
            if have.len() != got.len() {
                return Err(TensorError::InvalidArgument {
                    op: "adam_restore",
                    message: "moment shape mismatch".into(),
                });
            }
        }
        self.step_count = step_count;
        self.m = m;
        self.v = v;
        Ok(())
    }
}
