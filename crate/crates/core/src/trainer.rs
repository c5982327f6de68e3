//! Mini-batch Adam on the negative log-likelihood of log-softmax outputs.
//!
//! Training is single-threaded and fully determined by the architecture, the data and
//! [`TrainConfig::seed`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::linalg::{gemm, GemmOperand, Matrix};
use crate::network::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer, Network, Stop};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub betas: (f64, f64),
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 1e-3,
            batch_size: 128,
            seed: 0,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean mini-batch NLL over the epoch.
    pub train_loss: f64,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network,
    pub log: Vec<EpochLog>,
}

/// Dense stack `input → hidden… → 10` with ReLU between layers and a LogSoftmax head.
/// Weights are zero; [`train`] re-initialises them.
pub fn mlp(input: InputDims, hidden: &[usize]) -> Result<Network> {
    let mut layers = Vec::new();
    let mut width = input.len();
    for &h in hidden {
        layers.push(Layer::Dense(DenseLayer::new(Matrix::zeros(h, width), vec![0.0; h])?));
        layers.push(Layer::Activation(ActivationKind::Relu));
        width = h;
    }
    layers.push(Layer::Dense(DenseLayer::new(
        Matrix::zeros(NUM_CLASSES, width),
        vec![0.0; NUM_CLASSES],
    )?));
    layers.push(Layer::Activation(ActivationKind::LogSoftmax));
    Network::new(input, layers)
}

/// 784→256→128→10 for MNIST-shaped input.
pub fn mlp_default(input: InputDims) -> Result<Network> {
    mlp(input, &[256, 128])
}

/// conv(c→16, 3×3) → ReLU → conv(16→32, 3×3) → ReLU → dense → 10 → LogSoftmax.
pub fn cnn_default(input: InputDims) -> Result<Network> {
    let c = input.channels;
    let conv1 = ConvLayer::new(16, c, 3, 3, vec![0.0; 16 * c * 9], vec![0.0; 16], (1, 1), (0, 0))?;
    let conv2 = ConvLayer::new(32, 16, 3, 3, vec![0.0; 32 * 16 * 9], vec![0.0; 32], (1, 1), (0, 0))?;
    let flat = conv2.output_dims(conv1.output_dims(input)?)?.len();
    Network::new(
        input,
        vec![
            Layer::Conv(conv1),
            Layer::Activation(ActivationKind::Relu),
            Layer::Conv(conv2),
            Layer::Activation(ActivationKind::Relu),
            Layer::Dense(DenseLayer::new(
                Matrix::zeros(NUM_CLASSES, flat),
                vec![0.0; NUM_CLASSES],
            )?),
            Layer::Activation(ActivationKind::LogSoftmax),
        ],
    )
}

/// Re-draws every weight and bias uniformly from `±1/√fan_in`.
pub fn init_network(arch: &Network, seed: u64) -> Network {
    let mut net = arch.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        let (fan_in, (w, b)) = match layer {
            Layer::Dense(d) => (d.in_dim(), d.params_mut()),
            Layer::Conv(c) => {
                let (kh, kw) = c.kernel_size();
                (c.in_channels() * kh * kw, c.params_mut())
            }
            Layer::Activation(_) => continue,
        };
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in w.iter_mut().chain(b.iter_mut()) {
            *v = rng.gen_range(-bound..bound);
        }
    }
    net
}

fn check_compatible(net: &Network, data: &Dataset) -> Result<()> {
    if net.input_dims() != data.dims() {
        return Err(Error::Shape(format!(
            "network input {} does not match dataset {} images of {}",
            net.input_dims(),
            data.name(),
            data.dims()
        )));
    }
    Ok(())
}

fn check_classifier(net: &Network) -> Result<()> {
    if net.output_dims().len() != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "classifier must output {NUM_CLASSES} values, architecture outputs {}",
            net.output_dims().len()
        )));
    }
    if !net.has_trailing_log_softmax() {
        return Err(Error::Validation(
            "training needs a LogSoftmax as the final layer".into(),
        ));
    }
    Ok(())
}

pub fn train(arch: &Network, dataset: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    Ok(train_with_log(arch, dataset, None, cfg)?.network)
}

pub fn train_with_log(
    arch: &Network,
    dataset: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_classifier(arch)?;
    check_compatible(arch, dataset)?;
    if let Some(t) = test {
        check_compatible(arch, t)?;
    }
    if dataset.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }

    let mut net = init_network(arch, cfg.seed);
    let mut adam = Adam::new(&net, cfg);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let n = dataset.dims().len();
    let mut images = Vec::with_capacity(cfg.batch_size * n);
    let mut labels = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1 + epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            images.clear();
            labels.clear();
            for &i in batch {
                images.extend_from_slice(dataset.image(i));
                labels.push(dataset.label(i));
            }
            let (loss, grads) = loss_and_gradients(&net, &images, &labels);
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut net, &grads);
        }
        let test_acc = test.map(|t| evaluate(&net, t)).transpose()?;
        log.push(EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / dataset.len() as f64,
            test_acc,
        });
    }
    Ok(TrainOutcome { network: net, log })
}

/// Fraction of samples whose largest output equals the label; ties go to the lowest class.
pub fn evaluate(net: &Network, dataset: &Dataset) -> Result<f64> {
    check_compatible(net, dataset)?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for_each_output_chunk(net, dataset, Stop::Logits, |start, outputs, width| {
        for (k, row) in outputs.chunks_exact(width).enumerate() {
            if argmax(row) == dataset.label(start + k) as usize {
                correct += 1;
            }
        }
    });
    Ok(correct as f64 / dataset.len() as f64)
}

/// Mean NLL of the network's full (log-probability) output.
pub fn nll_loss(net: &Network, dataset: &Dataset) -> Result<f64> {
    check_compatible(net, dataset)?;
    check_classifier(net)?;
    let mut total = 0.0;
    for_each_output_chunk(net, dataset, Stop::Full, |start, outputs, width| {
        for (k, row) in outputs.chunks_exact(width).enumerate() {
            total -= row[dataset.label(start + k) as usize];
        }
    });
    Ok(total / dataset.len() as f64)
}

fn for_each_output_chunk(
    net: &Network,
    dataset: &Dataset,
    stop: Stop,
    mut f: impl FnMut(usize, &[f64], usize),
) {
    const CHUNK: usize = 256;
    let n = dataset.dims().len();
    let end = net.stop_index(stop);
    let width = net.layer_input_dims(end).len();
    let mut start = 0;
    while start < dataset.len() {
        let count = CHUNK.min(dataset.len() - start);
        let images = &dataset.pixels()[start * n..(start + count) * n];
        let trace = forward_batch(net, images, count, end);
        f(start, trace.last().expect("input is always recorded"), width);
        start += count;
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-layer gradient buffers `(weights, bias)`; empty for activations.
pub type Gradients = Vec<(Vec<f64>, Vec<f64>)>;

/// Batched forward keeping every intermediate activation: element `k` is the input of layer `k`.
fn forward_batch(net: &Network, images: &[f64], batch: usize, end: usize) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(end + 1);
    trace.push(images.to_vec());
    for (k, layer) in net.layers()[..end].iter().enumerate() {
        let x = trace.last().expect("non-empty");
        let in_dims = net.layer_input_dims(k);
        let out_len = net.layer_input_dims(k + 1).len();
        let y = match layer {
            Layer::Dense(d) => {
                let mut y = Vec::with_capacity(batch * out_len);
                for _ in 0..batch {
                    y.extend_from_slice(d.bias());
                }
                gemm(
                    batch,
                    d.in_dim(),
                    d.out_dim(),
                    1.0,
                    GemmOperand::new(x, d.in_dim(), false),
                    GemmOperand::new(d.weights().data(), d.in_dim(), true),
                    1.0,
                    &mut y,
                );
                y
            }
            Layer::Conv(c) => {
                let mut y = vec![0.0; batch * out_len];
                let out_dims = net.layer_input_dims(k + 1);
                let positions = out_dims.height * out_dims.width;
                let field = c.kernel().len() / c.out_channels();
                let mut patches = vec![0.0; positions * field];
                for s in 0..batch {
                    im2col(c, &x[s * in_dims.len()..(s + 1) * in_dims.len()], in_dims, out_dims, &mut patches);
                    let ys = &mut y[s * out_len..(s + 1) * out_len];
                    for (o, chunk) in ys.chunks_exact_mut(positions).enumerate() {
                        chunk.fill(c.bias()[o]);
                    }
                    gemm(
                        c.out_channels(),
                        field,
                        positions,
                        1.0,
                        GemmOperand::new(c.kernel(), field, false),
                        GemmOperand::new(&patches, field, true),
                        1.0,
                        ys,
                    );
                }
                y
            }
            Layer::Activation(a) => {
                let width = in_dims.len();
                x.chunks_exact(width).flat_map(|row| a.apply(row)).collect()
            }
        };
        trace.push(y);
    }
    trace
}

/// Unfolds one image into `positions × field` patches.
fn im2col(c: &ConvLayer, x: &[f64], in_dims: InputDims, out_dims: InputDims, patches: &mut [f64]) {
    let (kh, kw) = c.kernel_size();
    let (sy, sx) = c.stride();
    let (ph, pw) = c.padding();
    let field = c.in_channels() * kh * kw;
    patches.fill(0.0);
    for oy in 0..out_dims.height {
        for ox in 0..out_dims.width {
            let row = &mut patches[(oy * out_dims.width + ox) * field..][..field];
            for i in 0..c.in_channels() {
                for ky in 0..kh {
                    let Some(iy) = (oy * sy + ky).checked_sub(ph).filter(|&v| v < in_dims.height) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = (ox * sx + kx).checked_sub(pw).filter(|&v| v < in_dims.width) else {
                            continue;
                        };
                        row[(i * kh + ky) * kw + kx] = x[in_dims.index(i, iy, ix)];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back into the image gradient.
fn col2im(c: &ConvLayer, dpatches: &[f64], in_dims: InputDims, out_dims: InputDims, dx: &mut [f64]) {
    let (kh, kw) = c.kernel_size();
    let (sy, sx) = c.stride();
    let (ph, pw) = c.padding();
    let field = c.in_channels() * kh * kw;
    for oy in 0..out_dims.height {
        for ox in 0..out_dims.width {
            let row = &dpatches[(oy * out_dims.width + ox) * field..][..field];
            for i in 0..c.in_channels() {
                for ky in 0..kh {
                    let Some(iy) = (oy * sy + ky).checked_sub(ph).filter(|&v| v < in_dims.height) else {
                        continue;
                    };
                    for kx in 0..kw {
                        let Some(ix) = (ox * sx + kx).checked_sub(pw).filter(|&v| v < in_dims.width) else {
                            continue;
                        };
                        dx[in_dims.index(i, iy, ix)] += row[(i * kh + ky) * kw + kx];
                    }
                }
            }
        }
    }
}

/// Mean NLL over the batch and its gradient with respect to every parameter.
///
/// `images` holds `labels.len()` flattened samples. The network must end in LogSoftmax.
pub fn loss_and_gradients(net: &Network, images: &[f64], labels: &[u8]) -> (f64, Gradients) {
    let batch = labels.len();
    let layers = net.layers();
    let trace = forward_batch(net, images, batch, layers.len());
    let out = trace.last().expect("non-empty");
    let width = net.output_dims().len();

    let mut loss = 0.0;
    let mut delta = vec![0.0; out.len()];
    for (s, &label) in labels.iter().enumerate() {
        loss -= out[s * width + label as usize];
        delta[s * width + label as usize] = -1.0 / batch as f64;
    }
    loss /= batch as f64;

    let mut grads: Gradients = vec![(Vec::new(), Vec::new()); layers.len()];
    for k in (0..layers.len()).rev() {
        let x = &trace[k];
        let y = &trace[k + 1];
        let in_dims = net.layer_input_dims(k);
        let out_dims = net.layer_input_dims(k + 1);
        let need_input_grad = k > 0;
        delta = match &layers[k] {
            Layer::Dense(d) => {
                let (n_in, n_out) = (d.in_dim(), d.out_dim());
                let mut gw = vec![0.0; n_out * n_in];
                gemm(
                    n_out,
                    batch,
                    n_in,
                    1.0,
                    GemmOperand::new(&delta, n_out, true),
                    GemmOperand::new(x, n_in, false),
                    0.0,
                    &mut gw,
                );
                let mut gb = vec![0.0; n_out];
                for row in delta.chunks_exact(n_out) {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                grads[k] = (gw, gb);
                if need_input_grad {
                    let mut dx = vec![0.0; batch * n_in];
                    gemm(
                        batch,
                        n_out,
                        n_in,
                        1.0,
                        GemmOperand::new(&delta, n_out, false),
                        GemmOperand::new(d.weights().data(), n_in, false),
                        0.0,
                        &mut dx,
                    );
                    dx
                } else {
                    Vec::new()
                }
            }
            Layer::Conv(c) => {
                let positions = out_dims.height * out_dims.width;
                let n_out = c.out_channels();
                let field = c.kernel().len() / n_out;
                let mut gk = vec![0.0; c.kernel().len()];
                let mut gb = vec![0.0; n_out];
                let mut dx = if need_input_grad {
                    vec![0.0; batch * in_dims.len()]
                } else {
                    Vec::new()
                };
                let mut patches = vec![0.0; positions * field];
                let mut dpatches = vec![0.0; positions * field];
                for s in 0..batch {
                    let ds = &delta[s * out_dims.len()..(s + 1) * out_dims.len()];
                    im2col(c, &x[s * in_dims.len()..(s + 1) * in_dims.len()], in_dims, out_dims, &mut patches);
                    gemm(
                        n_out,
                        positions,
                        field,
                        1.0,
                        GemmOperand::new(ds, positions, false),
                        GemmOperand::new(&patches, field, false),
                        1.0,
                        &mut gk,
                    );
                    for (o, chunk) in ds.chunks_exact(positions).enumerate() {
                        gb[o] += chunk.iter().sum::<f64>();
                    }
                    if need_input_grad {
                        gemm(
                            positions,
                            n_out,
                            field,
                            1.0,
                            GemmOperand::new(ds, positions, true),
                            GemmOperand::new(c.kernel(), field, false),
                            0.0,
                            &mut dpatches,
                        );
                        col2im(
                            c,
                            &dpatches,
                            in_dims,
                            out_dims,
                            &mut dx[s * in_dims.len()..(s + 1) * in_dims.len()],
                        );
                    }
                }
                grads[k] = (gk, gb);
                dx
            }
            Layer::Activation(ActivationKind::Relu) => delta
                .iter()
                .zip(x)
                .map(|(d, &xi)| if xi > 0.0 { *d } else { 0.0 })
                .collect(),
            Layer::Activation(ActivationKind::Identity) => delta,
            Layer::Activation(ActivationKind::LogSoftmax) => {
                let w = in_dims.len();
                let mut dx = Vec::with_capacity(delta.len());
                for (dy, yrow) in delta.chunks_exact(w).zip(y.chunks_exact(w)) {
                    let total: f64 = dy.iter().sum();
                    dx.extend(dy.iter().zip(yrow).map(|(d, yi)| d - yi.exp() * total));
                }
                dx
            }
        };
    }
    (loss, grads)
}

/// All trainable values in layer order, weights before bias.
pub fn parameters(net: &Network) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                out.extend_from_slice(d.weights().data());
                out.extend_from_slice(d.bias());
            }
            Layer::Conv(c) => {
                out.extend_from_slice(c.kernel());
                out.extend_from_slice(c.bias());
            }
            Layer::Activation(_) => {}
        }
    }
    out
}

/// Inverse of [`parameters`].
pub fn with_parameters(net: &Network, values: &[f64]) -> Result<Network> {
    let total: usize = net.layers().iter().map(Layer::parameter_count).sum();
    if values.len() != total {
        return Err(Error::Shape(format!(
            "network has {total} parameters, got {}",
            values.len()
        )));
    }
    let mut out = net.clone();
    let mut offset = 0;
    for layer in out.layers_mut() {
        let (w, b) = match layer {
            Layer::Dense(d) => d.params_mut(),
            Layer::Conv(c) => c.params_mut(),
            Layer::Activation(_) => continue,
        };
        for slot in w.iter_mut().chain(b.iter_mut()) {
            *slot = values[offset];
            offset += 1;
        }
    }
    Ok(out)
}

/// Flattens gradients in the same order as [`parameters`].
pub fn flatten_gradients(grads: &Gradients) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
        .collect()
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Adam {
    fn new(net: &Network, cfg: &TrainConfig) -> Self {
        let n: usize = net.layers().iter().map(Layer::parameter_count).sum();
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.epsilon,
            step: 0,
            first: vec![0.0; n],
            second: vec![0.0; n],
        }
    }

    fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let mut offset = 0;
        for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(grads) {
            let (w, b) = match layer {
                Layer::Dense(d) => d.params_mut(),
                Layer::Conv(c) => c.params_mut(),
                Layer::Activation(_) => continue,
            };
            for (p, g) in w.iter_mut().chain(b.iter_mut()).zip(gw.iter().chain(gb)) {
                let m = &mut self.first[offset];
                let v = &mut self.second[offset];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                offset += 1;
            }
        }
    }
}
