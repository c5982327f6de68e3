//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::path::PathBuf;

use lipbound::linalg::Matrix;
use lipbound::network::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer, Network};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Zero-padded cross-correlation written straight from the definition, bias excluded.
pub fn naive_conv(layer: &ConvLayer, x: &[f64], dims: InputDims) -> Vec<f64> {
    let (kh, kw) = layer.kernel_size();
    let (sy, sx) = layer.stride();
    let (ph, pw) = layer.padding();
    let oh = (dims.height + 2 * ph - kh) / sy + 1;
    let ow = (dims.width + 2 * pw - kw) / sx + 1;
    let mut y = Vec::with_capacity(layer.out_channels() * oh * ow);
    for o in 0..layer.out_channels() {
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = 0.0;
                for i in 0..layer.in_channels() {
                    for a in 0..kh {
                        for b in 0..kw {
                            let py = (r * sy + a) as i64 - ph as i64;
                            let px = (c * sx + b) as i64 - pw as i64;
                            if py >= 0 && px >= 0 && (py as usize) < dims.height && (px as usize) < dims.width {
                                acc += layer.weight(o, i, a, b)
                                    * x[(i * dims.height + py as usize) * dims.width + px as usize];
                            }
                        }
                    }
                }
                y.push(acc);
            }
        }
    }
    y
}

/// Doubly block circulant matrix of the stride-1 circular cross-correlation on an `h × w`
/// grid, built entry by entry.
pub fn explicit_circulant(layer: &ConvLayer, h: usize, w: usize) -> Matrix {
    let (kh, kw) = layer.kernel_size();
    let (n_out, n_in) = (layer.out_channels(), layer.in_channels());
    let mut m = Matrix::zeros(n_out * h * w, n_in * h * w);
    for o in 0..n_out {
        for r in 0..h {
            for c in 0..w {
                for i in 0..n_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            let row = (o * h + r) * w + c;
                            let col = (i * h + (r + a) % h) * w + (c + b) % w;
                            let v = m.get(row, col) + layer.weight(o, i, a, b);
                            m.set(row, col, v);
                        }
                    }
                }
            }
        }
    }
    m
}

/// Direct double-sum 2-D DFT.
pub fn naive_dft2(rows: usize, cols: usize, data: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    for u in 0..rows {
        for v in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let angle = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / rows as f64 + (v * c) as f64 / cols as f64);
                    acc += data[r * cols + c] * Complex64::from_polar(1.0, angle);
                }
            }
            out[u * cols + v] = acc;
        }
    }
    out
}

pub fn random_conv(rng: &mut ChaCha8Rng, max_ch: usize, max_k: usize, max_stride: usize, max_pad: usize) -> ConvLayer {
    let out_ch = rng.gen_range(1..=max_ch);
    let in_ch = rng.gen_range(1..=max_ch);
    let kh = rng.gen_range(1..=max_k);
    let kw = rng.gen_range(1..=max_k);
    let stride = (rng.gen_range(1..=max_stride), rng.gen_range(1..=max_stride));
    let pad = (rng.gen_range(0..=max_pad.min(kh - 1)), rng.gen_range(0..=max_pad.min(kw - 1)));
    let kernel = uniform_vec(rng, out_ch * in_ch * kh * kw);
    let bias = uniform_vec(rng, out_ch);
    ConvLayer::new(out_ch, in_ch, kh, kw, kernel, bias, stride, pad).unwrap()
}

/// A random stack of conv/dense layers with ReLU between them.
pub fn random_relu_network(rng: &mut ChaCha8Rng) -> Network {
    let input = InputDims::new(rng.gen_range(1..=2), rng.gen_range(4..=7), rng.gen_range(4..=7)).unwrap();
    let mut layers = Vec::new();
    let mut dims = input;
    if rng.gen_bool(0.5) {
        let mut conv = random_conv(rng, 3, 3, 2, 1);
        while conv.in_channels() != dims.channels {
            conv = random_conv(rng, 3, 3, 2, 1);
        }
        dims = conv.output_dims(dims).unwrap();
        layers.push(Layer::Conv(conv));
        layers.push(Layer::Activation(ActivationKind::Relu));
    }
    let depth = rng.gen_range(1..=3);
    let mut width = dims.len();
    for d in 0..depth {
        let out = rng.gen_range(2..=12);
        let w = Matrix::from_fn(out, width, |_, _| rng.gen_range(-1.0..1.0));
        layers.push(Layer::Dense(DenseLayer::new(w, uniform_vec(rng, out)).unwrap()));
        if d + 1 < depth {
            layers.push(Layer::Activation(ActivationKind::Relu));
        }
        width = out;
    }
    Network::new(input, layers).unwrap()
}

/// Dataset root: `$LIPBOUND_DATA_ROOT`, else `data/` at the workspace root.
pub fn data_root() -> PathBuf {
    lipbound::data::data_root_from_env()
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}
