//! JSON model files (`.lbn.json`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer};
use super::Network;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    input_dims: InputDims,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerRecord {
    Dense {
        out: usize,
        #[serde(rename = "in")]
        input: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    Conv {
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        stride: [usize; 2],
        pad: [usize; 2],
        kernel: Vec<f64>,
        bias: Vec<f64>,
    },
    Relu,
    Logsoftmax,
    Identity,
}

impl LayerRecord {
    fn from_layer(layer: &Layer) -> Self {
        match layer {
            Layer::Dense(d) => LayerRecord::Dense {
                out: d.out_dim(),
                input: d.in_dim(),
                weights: d.weights().data().to_vec(),
                bias: d.bias().to_vec(),
            },
            Layer::Conv(c) => {
                let (kh, kw) = c.kernel_size();
                let (sy, sx) = c.stride();
                let (ph, pw) = c.padding();
                LayerRecord::Conv {
                    out_ch: c.out_channels(),
                    in_ch: c.in_channels(),
                    kh,
                    kw,
                    stride: [sy, sx],
                    pad: [ph, pw],
                    kernel: c.kernel().to_vec(),
                    bias: c.bias().to_vec(),
                }
            }
            Layer::Activation(ActivationKind::Relu) => LayerRecord::Relu,
            Layer::Activation(ActivationKind::LogSoftmax) => LayerRecord::Logsoftmax,
            Layer::Activation(ActivationKind::Identity) => LayerRecord::Identity,
        }
    }

    fn into_layer(self, index: usize) -> Result<Layer> {
        let ctx = |kind: &str, e: Error| {
            let message = match e {
                Error::Validation(m) | Error::Shape(m) | Error::InvalidInput(m) => m,
                other => other.to_string(),
            };
            Error::Validation(format!("layers[{index}] ({kind}): {message}"))
        };
        Ok(match self {
            LayerRecord::Dense {
                out,
                input,
                weights,
                bias,
            } => {
                let weights = Matrix::new(out, input, weights).map_err(|e| ctx("dense", e))?;
                Layer::Dense(DenseLayer::new(weights, bias).map_err(|e| ctx("dense", e))?)
            }
            LayerRecord::Conv {
                out_ch,
                in_ch,
                kh,
                kw,
                stride,
                pad,
                kernel,
                bias,
            } => Layer::Conv(
                ConvLayer::new(
                    out_ch,
                    in_ch,
                    kh,
                    kw,
                    kernel,
                    bias,
                    (stride[0], stride[1]),
                    (pad[0], pad[1]),
                )
                .map_err(|e| ctx("conv", e))?,
            ),
            LayerRecord::Relu => Layer::Activation(ActivationKind::Relu),
            LayerRecord::Logsoftmax => Layer::Activation(ActivationKind::LogSoftmax),
            LayerRecord::Identity => Layer::Activation(ActivationKind::Identity),
        })
    }
}

pub fn to_json_string(net: &Network) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        input_dims: net.input_dims(),
        layers: net.layers().iter().map(LayerRecord::from_layer).collect(),
    };
    let mut s = serde_json::to_string(&file).expect("model serialisation cannot fail");
    s.push('\n');
    s
}

/// Parses a model document. `origin` names the source in error messages.
pub fn from_json_str(text: &str, origin: &str) -> Result<Network> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        context: format!("{origin} line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "{origin}: unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_layer(i))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{origin}: {m}")),
            other => other,
        })?;
    Network::new(file.input_dims, layers).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("{origin}: {m}")),
        other => other,
    })
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    crate::fsutil::write_atomic(path.as_ref(), to_json_string(net).as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text, &path.display().to_string())
}
