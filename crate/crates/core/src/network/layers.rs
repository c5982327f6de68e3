use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Shape of a single-sample tensor, flattened channel-major then row then column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputDims {
    #[serde(rename = "c")]
    pub channels: usize,
    #[serde(rename = "h")]
    pub height: usize,
    #[serde(rename = "w")]
    pub width: usize,
}

impl InputDims {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        let dims = Self {
            channels,
            height,
            width,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// A flat vector of `n` values.
    pub fn flat(n: usize) -> Result<Self> {
        Self::new(n, 1, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Validation(format!(
                "dimensions must be at least 1, got {self}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl fmt::Display for InputDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    LogSoftmax,
    Identity,
}

impl ActivationKind {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ActivationKind::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            ActivationKind::Identity => x.to_vec(),
            ActivationKind::LogSoftmax => {
                let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                x.iter().map(|v| v - lse).collect()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::LogSoftmax => "logsoftmax",
            ActivationKind::Identity => "identity",
        }
    }
}

/// Affine map `W·x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::Validation(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("bias has non-finite values".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.data_mut(), &mut self.bias)
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weights.matvec(x);
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        y
    }
}

/// 2-D cross-correlation with zero padding, as used by convolutional layers.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    /// `[out, in, kh, kw]`, row-major.
    kernel: Vec<f64>,
    bias: Vec<f64>,
    stride: (usize, usize),
    padding: (usize, usize),
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel_h == 0 || kernel_w == 0 {
            return Err(Error::Validation(
                "conv channel and kernel dimensions must be at least 1".into(),
            ));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Validation("conv stride must be at least 1".into()));
        }
        let expected = out_channels * in_channels * kernel_h * kernel_w;
        if kernel.len() != expected {
            return Err(Error::Validation(format!(
                "kernel has {} values, expected {out_channels}x{in_channels}x{kernel_h}x{kernel_w} = {expected}",
                kernel.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Validation(format!(
                "bias length {} does not match {out_channels} output channels",
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation("conv parameters must be finite".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernel_h, self.kernel_w)
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.kernel, &mut self.bias)
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn padding(&self) -> (usize, usize) {
        self.padding
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.kernel[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    /// Output shape `⌊(I + 2p − K)/S⌋ + 1` per spatial axis.
    pub fn output_dims(&self, input: InputDims) -> Result<InputDims> {
        if input.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let padded_h = input.height + 2 * self.padding.0;
        let padded_w = input.width + 2 * self.padding.1;
        if self.kernel_h > padded_h || self.kernel_w > padded_w {
            return Err(Error::Shape(format!(
                "{}x{} kernel does not fit the padded {padded_h}x{padded_w} input",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok(InputDims {
            channels: self.out_channels,
            height: (padded_h - self.kernel_h) / self.stride.0 + 1,
            width: (padded_w - self.kernel_w) / self.stride.1 + 1,
        })
    }

    /// Direct nested-loop evaluation, bias included.
    pub fn forward(&self, x: &[f64], dims: InputDims) -> Vec<f64> {
        let out = self.output_dims(dims).expect("conv input shape validated");
        assert_eq!(x.len(), dims.len());
        let (sy, sx) = self.stride;
        let (ph, pw) = self.padding;
        let mut y = vec![0.0; out.len()];
        for o in 0..self.out_channels {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    let mut acc = self.bias[o];
                    for i in 0..self.in_channels {
                        for ky in 0..self.kernel_h {
                            let iy = (oy * sy + ky) as isize - ph as isize;
                            if iy < 0 || iy >= dims.height as isize {
                                continue;
                            }
                            for kx in 0..self.kernel_w {
                                let ix = (ox * sx + kx) as isize - pw as isize;
                                if ix < 0 || ix >= dims.width as isize {
                                    continue;
                                }
                                acc += self.weight(o, i, ky, kx)
                                    * x[dims.index(i, iy as usize, ix as usize)];
                            }
                        }
                    }
                    y[out.index(o, oy, ox)] = acc;
                }
            }
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Activation(ActivationKind),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::Activation(a) => a.name(),
        }
    }

    pub fn output_dims(&self, input: InputDims) -> Result<InputDims> {
        match self {
            Layer::Dense(d) => {
                if d.in_dim() != input.len() {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs, preceding output has {} ({input})",
                        d.in_dim(),
                        input.len()
                    )));
                }
                InputDims::flat(d.out_dim())
            }
            Layer::Conv(c) => c.output_dims(input),
            Layer::Activation(_) => Ok(input),
        }
    }

    pub fn forward(&self, x: &[f64], dims: InputDims) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv(c) => c.forward(x, dims),
            Layer::Activation(a) => a.apply(x),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights().len() + d.bias().len(),
            Layer::Conv(c) => c.kernel().len() + c.bias().len(),
            Layer::Activation(_) => 0,
        }
    }
}
