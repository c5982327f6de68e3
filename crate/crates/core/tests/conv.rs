mod common;

use lipbound::conv::{
    conv_spectrum_fft, conv_to_toeplitz, convert_network, unroll_forward, ConvOperator,
};
use lipbound::linalg::{singular_values_exact_with_limit, LinearOperator, Matrix};
use lipbound::network::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer, Network, Stop};
use lipbound::trainer::{cnn_default, init_network};
use lipbound::Error;
use proptest::prelude::*;
use rand::Rng;

use common::{explicit_circulant, naive_conv, random_conv, rng, uniform_vec};

fn seeded_two_to_three() -> ConvLayer {
    let mut r = rng(23);
    ConvLayer::new(3, 2, 3, 3, uniform_vec(&mut r, 54), uniform_vec(&mut r, 3), (1, 1), (0, 0)).unwrap()
}

#[test]
fn toeplitz_matches_nested_loop_on_8x8() {
    let layer = seeded_two_to_three();
    let dims = InputDims::new(2, 8, 8).unwrap();
    let t = conv_to_toeplitz(&layer, dims).unwrap();
    assert_eq!((t.matrix.rows(), t.matrix.cols()), (3 * 36, 2 * 64));
    let x = uniform_vec(&mut rng(1), dims.len());
    let y = t.matrix.matvec(&x);
    for (a, b) in y.iter().zip(naive_conv(&layer, &x, dims)) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn fft_spectrum_matches_explicit_circulant_on_8x8() {
    let layer = seeded_two_to_three();
    let dims = InputDims::new(2, 8, 8).unwrap();
    let spectrum = conv_spectrum_fft(&layer, dims).unwrap();
    assert_eq!((spectrum.grid_height, spectrum.grid_width), (8, 8));
    let circ = explicit_circulant(&layer, 8, 8);
    let exact = singular_values_exact_with_limit(&circ, usize::MAX).unwrap();
    assert!((spectrum.sigma_max - exact[0]).abs() <= 1e-6 * exact[0]);
    // The union of per-frequency values is the whole circulant spectrum.
    let mut all: Vec<f64> = spectrum.per_frequency_sigmas.concat();
    all.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in all.iter().zip(&exact) {
        assert!((a - b).abs() <= 1e-8 * exact[0]);
    }
}

#[test]
fn implicit_operator_adjoint_is_consistent() {
    let layer = ConvLayer::new(2, 3, 3, 2, uniform_vec(&mut rng(4), 36), vec![0.0; 2], (2, 1), (1, 1)).unwrap();
    let dims = InputDims::new(3, 7, 6).unwrap();
    let op = ConvOperator::new(&layer, dims).unwrap();
    let x = uniform_vec(&mut rng(5), op.ncols());
    let y = uniform_vec(&mut rng(6), op.nrows());
    let mut ax = vec![0.0; op.nrows()];
    let mut aty = vec![0.0; op.ncols()];
    op.apply(&x, &mut ax);
    op.apply_transpose(&y, &mut aty);
    let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
    assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
}

fn check_conversion(net: &Network, inputs: usize, seed: u64) {
    let converted = convert_network(net).unwrap();
    assert!(converted.layers().iter().all(|l| !matches!(l, Layer::Conv(_))));
    let mut r = rng(seed);
    for _ in 0..inputs {
        let x = uniform_vec(&mut r, net.input_len());
        let a = net.forward(&x, Stop::Full).unwrap();
        let b = converted.forward(&x, Stop::Full).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() <= 1e-6, "{u} vs {v}");
        }
    }
}

#[test]
fn converted_network_agrees_on_100_inputs() {
    let dims = InputDims::new(1, 6, 6).unwrap();
    let mut r = rng(7);
    let conv = ConvLayer::new(2, 1, 3, 3, uniform_vec(&mut r, 18), uniform_vec(&mut r, 2), (1, 1), (1, 1)).unwrap();
    let net = Network::new(
        dims,
        vec![
            Layer::Conv(conv),
            Layer::Activation(ActivationKind::Relu),
            Layer::Dense(DenseLayer::new(Matrix::random_uniform(4, 72, 8), uniform_vec(&mut r, 4)).unwrap()),
            Layer::Activation(ActivationKind::LogSoftmax),
        ],
    )
    .unwrap();
    check_conversion(&net, 100, 9);
}

#[test]
fn converted_cifar_shaped_cnn_agrees() {
    let net = init_network(&cnn_default(InputDims::new(3, 12, 12).unwrap()).unwrap(), 3);
    check_conversion(&net, 5, 10);
}

#[test]
fn toeplitz_rejects_oversized_layers() {
    let layer = ConvLayer::new(64, 64, 3, 3, vec![0.0; 64 * 64 * 9], vec![0.0; 64], (1, 1), (1, 1)).unwrap();
    let dims = InputDims::new(64, 32, 32).unwrap();
    assert!(matches!(conv_to_toeplitz(&layer, dims), Err(Error::SizeLimit { .. })));
    // The implicit operator has no size limit.
    assert!(ConvOperator::new(&layer, dims).is_ok());
}

fn case() -> impl Strategy<Value = (ConvLayer, InputDims, Vec<f64>)> {
    any::<u64>().prop_map(|seed| {
        let mut r = rng(seed);
        let layer = random_conv(&mut r, 3, 4, 2, 2);
        let (kh, kw) = layer.kernel_size();
        let dims = InputDims::new(layer.in_channels(), r.gen_range(kh..=9), r.gen_range(kw..=9)).unwrap();
        let x = uniform_vec(&mut r, dims.len());
        (layer, dims, x)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toeplitz_equals_conv((layer, dims, x) in case()) {
        let t = conv_to_toeplitz(&layer, dims).unwrap();
        let y = t.matrix.matvec(&x);
        for (a, b) in y.iter().zip(naive_conv(&layer, &x, dims)) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn unroll_equals_toeplitz((layer, dims, x) in case()) {
        let t = conv_to_toeplitz(&layer, dims).unwrap();
        let (patches, _) = unroll_forward(&layer, &x, dims).unwrap();
        for (a, b) in patches.rolled_product().iter().zip(t.matrix.matvec(&x)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_padding_never_exceeds_circulant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let layer = random_conv(&mut r, 2, 3, 1, 1);
        let (kh, kw) = layer.kernel_size();
        let dims = InputDims::new(layer.in_channels(), r.gen_range(kh..=6), r.gen_range(kw..=6)).unwrap();
        let spectrum = conv_spectrum_fft(&layer, dims).unwrap();
        let t = conv_to_toeplitz(&layer, dims).unwrap();
        let zero_pad = singular_values_exact_with_limit(&t.matrix, usize::MAX).unwrap()[0];
        prop_assert!(zero_pad <= spectrum.sigma_max * (1.0 + 1e-6));
    }
}
