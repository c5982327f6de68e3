//! Convolutional layers as dense linear operators.
//!
//! Two exact constructions of the zero-padded operator are provided: the Toeplitz matrix built
//! entry by entry from the kernel, and the im2col unrolling that rewrites the convolution as a
//! product of an input-patch matrix and a reshaped kernel. Separately, [`conv_spectrum_fft`]
//! computes the exact singular values of the *circular* convolution with the same kernel from
//! per-frequency channel matrices, without building any operator.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{complex_singular_values, dft2, ComplexMatrix, LinearOperator, Matrix};
use crate::network::{ConvLayer, DenseLayer, InputDims, Layer, Network};

/// Largest dense Toeplitz matrix (in entries) that will be materialised.
pub const TOEPLITZ_MAX_ENTRIES: usize = 50_000_000;

/// Dense matrix `T` with `T·vec(x) = conv(x)` (bias excluded) under channel-major flattening.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzOperator {
    pub matrix: Matrix,
    pub layer: ConvLayer,
    pub input_dims: InputDims,
    pub output_dims: InputDims,
}

pub fn conv_to_toeplitz(layer: &ConvLayer, dims: InputDims) -> Result<ToeplitzOperator> {
    let out = layer.output_dims(dims)?;
    let entries = out.len() * dims.len();
    if entries > TOEPLITZ_MAX_ENTRIES {
        return Err(Error::SizeLimit {
            entries,
            limit: TOEPLITZ_MAX_ENTRIES,
        });
    }
    let mut t = Matrix::zeros(out.len(), dims.len());
    let cols = dims.len();
    let data = t.data_mut();
    for_each_tap(layer, dims, out, |row, col, w| data[row * cols + col] += w);
    Ok(ToeplitzOperator {
        matrix: t,
        layer: layer.clone(),
        input_dims: dims,
        output_dims: out,
    })
}

/// Visits every (output index, input index, weight) triple of the zero-padded operator.
/// Taps landing in the padding are skipped, which is how zero padding becomes structural zeros.
fn for_each_tap(
    layer: &ConvLayer,
    dims: InputDims,
    out: InputDims,
    mut f: impl FnMut(usize, usize, f64),
) {
    let (kh, kw) = layer.kernel_size();
    let (sy, sx) = layer.stride();
    let (ph, pw) = layer.padding();
    for o in 0..layer.out_channels() {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let row = out.index(o, oy, ox);
                for i in 0..layer.in_channels() {
                    for ky in 0..kh {
                        let Some(iy) = (oy * sy + ky).checked_sub(ph).filter(|&v| v < dims.height)
                        else {
                            continue;
                        };
                        for kx in 0..kw {
                            let Some(ix) =
                                (ox * sx + kx).checked_sub(pw).filter(|&v| v < dims.width)
                            else {
                                continue;
                            };
                            f(row, dims.index(i, iy, ix), layer.weight(o, i, ky, kx));
                        }
                    }
                }
            }
        }
    }
}

/// The zero-padded convolution applied matrix-free; the same linear map as the Toeplitz matrix.
#[derive(Clone, Debug)]
pub struct ConvOperator<'a> {
    layer: &'a ConvLayer,
    input_dims: InputDims,
    output_dims: InputDims,
}

impl<'a> ConvOperator<'a> {
    pub fn new(layer: &'a ConvLayer, dims: InputDims) -> Result<Self> {
        Ok(Self {
            output_dims: layer.output_dims(dims)?,
            layer,
            input_dims: dims,
        })
    }
}

impl LinearOperator for ConvOperator<'_> {
    fn nrows(&self) -> usize {
        self.output_dims.len()
    }

    fn ncols(&self) -> usize {
        self.input_dims.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for_each_tap(self.layer, self.input_dims, self.output_dims, |r, c, w| {
            y[r] += w * x[c]
        });
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
        for_each_tap(self.layer, self.input_dims, self.output_dims, |r, c, w| {
            x[c] += w * y[r]
        });
    }
}

/// The two factors of an unrolled convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    /// `(O_Y·O_X) × (in·k_h·k_w)`: one flattened receptive field per output position.
    pub patches: Matrix,
    /// `(in·k_h·k_w) × out`: one column per filter.
    pub kernel: Matrix,
    pub output_dims: InputDims,
}

impl PatchMatrix {
    /// `patches · kernel` rolled back to channel-major output order, without bias.
    pub fn rolled_product(&self) -> Vec<f64> {
        let product = self
            .patches
            .matmul(&self.kernel)
            .expect("patch and kernel widths agree by construction");
        let out = self.output_dims;
        let positions = out.height * out.width;
        let mut y = vec![0.0; out.len()];
        for p in 0..positions {
            for o in 0..out.channels {
                y[o * positions + p] = product.get(p, o);
            }
        }
        y
    }
}

/// im2col: unfold the input into patches, stitch the filters into one weight matrix, multiply,
/// roll back, add bias.
pub fn unroll_forward(
    layer: &ConvLayer,
    input: &[f64],
    dims: InputDims,
) -> Result<(PatchMatrix, Vec<f64>)> {
    let patch = unroll(layer, input, dims)?;
    let mut y = patch.rolled_product();
    let positions = patch.output_dims.height * patch.output_dims.width;
    for (o, chunk) in y.chunks_exact_mut(positions).enumerate() {
        let b = layer.bias()[o];
        chunk.iter_mut().for_each(|v| *v += b);
    }
    Ok((patch, y))
}

fn unroll(layer: &ConvLayer, input: &[f64], dims: InputDims) -> Result<PatchMatrix> {
    let out = layer.output_dims(dims)?;
    if input.len() != dims.len() {
        return Err(Error::Shape(format!(
            "input has {} values, {dims} needs {}",
            input.len(),
            dims.len()
        )));
    }
    let (kh, kw) = layer.kernel_size();
    let (sy, sx) = layer.stride();
    let (ph, pw) = layer.padding();
    let field = layer.in_channels() * kh * kw;
    let mut patches = Matrix::zeros(out.height * out.width, field);
    {
        let data = patches.data_mut();
        for oy in 0..out.height {
            for ox in 0..out.width {
                let row = &mut data[(oy * out.width + ox) * field..][..field];
                for i in 0..layer.in_channels() {
                    for ky in 0..kh {
                        let iy = (oy * sy + ky) as isize - ph as isize;
                        for kx in 0..kw {
                            let ix = (ox * sx + kx) as isize - pw as isize;
                            let inside = iy >= 0
                                && ix >= 0
                                && (iy as usize) < dims.height
                                && (ix as usize) < dims.width;
                            if inside {
                                row[(i * kh + ky) * kw + kx] =
                                    input[dims.index(i, iy as usize, ix as usize)];
                            }
                        }
                    }
                }
            }
        }
    }
    let kernel = Matrix::from_fn(field, layer.out_channels(), |f, o| {
        layer.kernel()[o * field + f]
    });
    Ok(PatchMatrix {
        patches,
        kernel,
        output_dims: out,
    })
}

/// The operator matrix recovered through the unrolling path, one basis vector per column.
pub fn unrolled_operator_matrix(layer: &ConvLayer, dims: InputDims) -> Result<Matrix> {
    let out = layer.output_dims(dims)?;
    let entries = out.len() * dims.len();
    if entries > TOEPLITZ_MAX_ENTRIES {
        return Err(Error::SizeLimit {
            entries,
            limit: TOEPLITZ_MAX_ENTRIES,
        });
    }
    let mut m = Matrix::zeros(out.len(), dims.len());
    let mut basis = vec![0.0; dims.len()];
    for col in 0..dims.len() {
        basis[col] = 1.0;
        let column = unroll(layer, &basis, dims)?.rolled_product();
        basis[col] = 0.0;
        for (row, v) in column.into_iter().enumerate() {
            if v != 0.0 {
                m.set(row, col, v);
            }
        }
    }
    Ok(m)
}

/// Singular values of the circular convolution, grouped by 2-D frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpectrum {
    pub grid_height: usize,
    pub grid_width: usize,
    /// Row-major over `(u, v)`; each list is descending with `min(out, in)` entries.
    pub per_frequency_sigmas: Vec<Vec<f64>>,
    pub sigma_max: f64,
}

impl ConvSpectrum {
    pub fn at(&self, u: usize, v: usize) -> &[f64] {
        &self.per_frequency_sigmas[u * self.grid_width + v]
    }
}

/// Exact spectrum of the circular convolution with this kernel on the padded input grid
/// `(H + 2p_h) × (W + 2p_w)`.
///
/// The zero-padded operator of the layer is a submatrix of that circulant operator, so
/// `sigma_max` upper-bounds its spectral norm. Only stride 1 is supported.
pub fn conv_spectrum_fft(layer: &ConvLayer, dims: InputDims) -> Result<ConvSpectrum> {
    if layer.stride() != (1, 1) {
        return Err(Error::Unsupported(format!(
            "FFT spectrum needs stride (1, 1), layer has {:?}",
            layer.stride()
        )));
    }
    if dims.channels != layer.in_channels() {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {}",
            layer.in_channels(),
            dims.channels
        )));
    }
    let (kh, kw) = layer.kernel_size();
    let grid_h = dims.height + 2 * layer.padding().0;
    let grid_w = dims.width + 2 * layer.padding().1;
    if kh > grid_h || kw > grid_w {
        return Err(Error::Shape(format!(
            "{kh}x{kw} kernel exceeds the {grid_h}x{grid_w} frequency grid"
        )));
    }
    let (n_out, n_in) = (layer.out_channels(), layer.in_channels());

    // One transform per channel pair of the zero-extended filter.
    let transforms: Vec<ComplexMatrix> = (0..n_out * n_in)
        .map(|pair| {
            let (o, i) = (pair / n_in, pair % n_in);
            let mut padded = ComplexMatrix::zeros(grid_h, grid_w);
            for ky in 0..kh {
                for kx in 0..kw {
                    padded.set(ky, kx, Complex64::new(layer.weight(o, i, ky, kx), 0.0));
                }
            }
            dft2(&padded)
        })
        .collect();

    let per_frequency_sigmas = (0..grid_h * grid_w)
        .into_par_iter()
        .map(|freq| {
            let (u, v) = (freq / grid_w, freq % grid_w);
            let block: Vec<Complex64> = transforms.iter().map(|t| t.get(u, v)).collect();
            complex_singular_values(n_out, n_in, &block)
        })
        .collect::<Result<Vec<_>>>()?;
    let sigma_max = per_frequency_sigmas
        .iter()
        .map(|s| s[0])
        .fold(0.0, f64::max);
    Ok(ConvSpectrum {
        grid_height: grid_h,
        grid_width: grid_w,
        per_frequency_sigmas,
        sigma_max,
    })
}

/// Replaces every convolution with the equivalent dense layer (Toeplitz weights, per-channel
/// bias repeated over the output positions). Activations and dense layers are kept as they are.
pub fn convert_network(net: &Network) -> Result<Network> {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(index, layer)| match layer {
            Layer::Conv(conv) => {
                let op = conv_to_toeplitz(conv, net.layer_input_dims(index))?;
                let positions = op.output_dims.height * op.output_dims.width;
                let bias = conv
                    .bias()
                    .iter()
                    .flat_map(|&b| std::iter::repeat_n(b, positions))
                    .collect();
                Ok(Layer::Dense(DenseLayer::new(op.matrix, bias)?))
            }
            other => Ok(other.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Network::new(net.input_dims(), layers)
}
