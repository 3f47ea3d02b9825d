//! Thin learned-layer wrappers: a conv and a linear holding their own
//! parameter tensors, plus the conv + instance-norm + relu block the encoders
//! are assembled from.

use bevmos_tensor::{ops, CounterRng, ParamSet, Tensor};

use crate::error::Result;

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone)]
pub struct Conv2dLayer {
    pub name: String,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dLayer {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut CounterRng,
    ) -> Conv2dLayer {
        let fan_in = c_in * kernel * kernel;
        Conv2dLayer {
            name: name.into(),
            weight: Tensor::kaiming_uniform(&[c_out, c_in, kernel, kernel], fan_in, rng),
            bias: Some(Tensor::zeros_leaf(&[c_out])),
            stride,
            padding,
        }
    }

    pub fn new_no_bias(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut CounterRng,
    ) -> Conv2dLayer {
        let mut layer = Conv2dLayer::new(name, c_in, c_out, kernel, stride, padding, rng);
        layer.bias = None;
        layer
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)?)
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        params.push(format!("{}.weight", self.name), self.weight.clone())?;
        if let Some(b) = &self.bias {
            params.push(format!("{}.bias", self.name), b.clone())?;
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct LinearLayer {
    pub name: String,
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl LinearLayer {
    pub fn new(name: impl Into<String>, c_in: usize, c_out: usize, rng: &mut CounterRng) -> LinearLayer {
        LinearLayer {
            name: name.into(),
            weight: Tensor::kaiming_uniform(&[c_in, c_out], c_in, rng),
            bias: Some(Tensor::zeros_leaf(&[c_out])),
        }
    }

    pub fn new_no_bias(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        rng: &mut CounterRng,
    ) -> LinearLayer {
        let mut layer = LinearLayer::new(name, c_in, c_out, rng);
        layer.bias = None;
        layer
    }

    /// Zero-initialized weights and bias (deformable offset/attention heads
    /// start as identity sampling with uniform attention).
    pub fn new_zeroed(name: impl Into<String>, c_in: usize, c_out: usize) -> LinearLayer {
        LinearLayer {
            name: name.into(),
            weight: Tensor::zeros_leaf(&[c_in, c_out]),
            bias: Some(Tensor::zeros_leaf(&[c_out])),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(ops::linear(x, &self.weight, self.bias.as_ref())?)
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        params.push(format!("{}.weight", self.name), self.weight.clone())?;
        if let Some(b) = &self.bias {
            params.push(format!("{}.bias", self.name), b.clone())?;
        }
        Ok(())
    }
}

/// conv -> instance norm -> relu.
#[derive(Clone)]
pub struct ConvBlock {
    pub conv: Conv2dLayer,
}

impl ConvBlock {
    pub fn new(
        name: impl Into<String>,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut CounterRng,
    ) -> ConvBlock {
        ConvBlock {
            conv: Conv2dLayer::new(name, c_in, c_out, kernel, stride, padding, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let n = ops::instance_norm(&y, NORM_EPS)?;
        Ok(ops::relu(&n))
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.conv.collect(params)
    }
}

/// Two 3x3 convs with norms and a skip connection, resolution preserving.
#[derive(Clone)]
pub struct ResidualBlock {
    conv1: Conv2dLayer,
    conv2: Conv2dLayer,
}

impl ResidualBlock {
    pub fn new(name: &str, channels: usize, rng: &mut CounterRng) -> ResidualBlock {
        ResidualBlock {
            conv1: Conv2dLayer::new(format!("{name}.conv1"), channels, channels, 3, 1, 1, rng),
            conv2: Conv2dLayer::new(format!("{name}.conv2"), channels, channels, 3, 1, 1, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = ops::relu(&ops::instance_norm(&self.conv1.forward(x)?, NORM_EPS)?);
        let y = ops::instance_norm(&self.conv2.forward(&y)?, NORM_EPS)?;
        Ok(ops::relu(&ops::add(&y, x)?))
    }

    pub fn collect(&self, params: &mut ParamSet) -> Result<()> {
        self.conv1.collect(params)?;
        self.conv2.collect(params)
    }
}
