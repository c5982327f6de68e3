//! Feed-forward networks of dense layers, 2-D convolutions and activations.

mod io;
mod layers;

pub use io::{from_json_str, load_model, save_model, to_json_string, FORMAT_VERSION};
pub use layers::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where [`Network::forward`] stops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stop {
    Full,
    /// Skip a trailing LogSoftmax, if there is one.
    #[default]
    Logits,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    input_dims: InputDims,
    layers: Vec<Layer>,
    // shapes[i] is the input shape of layer i; shapes[len] is the output shape.
    shapes: Vec<InputDims>,
}

impl Network {
    pub fn new(input_dims: InputDims, layers: Vec<Layer>) -> Result<Self> {
        input_dims.validate()?;
        if layers.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut current = input_dims;
        shapes.push(current);
        for (i, layer) in layers.iter().enumerate() {
            current = layer
                .output_dims(current)
                .map_err(|e| Error::Validation(format!("layer {i} ({}): {e}", layer.kind_name())))?;
            shapes.push(current);
        }
        Ok(Self {
            input_dims,
            layers,
            shapes,
        })
    }

    pub fn input_dims(&self) -> InputDims {
        self.input_dims
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.len()
    }

    pub fn output_dims(&self) -> InputDims {
        *self.shapes.last().expect("at least one shape")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Input shape seen by layer `index`.
    pub fn layer_input_dims(&self, index: usize) -> InputDims {
        self.shapes[index]
    }

    /// Number of layers evaluated for the given stop point.
    pub fn stop_index(&self, stop: Stop) -> usize {
        match (stop, self.layers.last()) {
            (Stop::Logits, Some(Layer::Activation(ActivationKind::LogSoftmax))) => {
                self.layers.len() - 1
            }
            _ => self.layers.len(),
        }
    }

    pub fn has_trailing_log_softmax(&self) -> bool {
        self.stop_index(Stop::Logits) != self.layers.len()
    }

    pub fn forward(&self, input: &[f64], stop: Stop) -> Result<Vec<f64>> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "network expects {} inputs ({}), got {}",
                self.input_len(),
                self.input_dims,
                input.len()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input has non-finite values".into()));
        }
        Ok(self.forward_unchecked(input, stop))
    }

    /// Forward pass without shape or finiteness checks. Panics on a length mismatch.
    pub fn forward_unchecked(&self, input: &[f64], stop: Stop) -> Vec<f64> {
        let end = self.stop_index(stop);
        let mut x = input.to_vec();
        for (layer, &dims) in self.layers[..end].iter().zip(&self.shapes) {
            x = layer.forward(&x, dims);
        }
        x
    }

    /// True when every activation in the network is ReLU or Identity.
    pub fn only_one_lipschitz_activations(&self) -> bool {
        self.layers.iter().all(|l| {
            !matches!(l, Layer::Activation(ActivationKind::LogSoftmax))
        })
    }
}
