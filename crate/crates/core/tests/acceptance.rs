//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.
//!
//! Criteria 5 to 7 need MNIST under `$LIPBOUND_DATA_ROOT/mnist` or `data/mnist` at the
//! workspace root; they fail when it is missing.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lipbound::bounds::{gap_report, trivial_bound, BoundConfig};
use lipbound::conv::{conv_spectrum_fft, conv_to_toeplitz, unroll_forward, unrolled_operator_matrix};
use lipbound::data::{load_mnist_dir, synthetic_dataset, Dataset, Split};
use lipbound::empirical::{convergence_table, run_algorithm1, run_algorithm1_literal, EmpiricalConfig};
use lipbound::linalg::{
    distance2, singular_values_exact_with_limit, spectral_norm_power, Matrix, PowerIterConfig,
};
use lipbound::network::{ActivationKind, ConvLayer, DenseLayer, InputDims, Layer, Network, Stop};
use lipbound::trainer::{
    evaluate, flatten_gradients, init_network, loss_and_gradients, mlp_default, parameters, train,
    with_parameters, TrainConfig,
};
use rand::Rng;

use common::{data_root, explicit_circulant, naive_conv, random_conv, random_relu_network, rng, uniform_vec};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn toeplitz_unroll_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1001);
    let (mut conv_dev, mut unroll_dev, mut matrix_dev) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let layer = random_conv(&mut r, 4, 5, 2, 2);
        let (kh, kw) = layer.kernel_size();
        let h = r.gen_range(kh.max(1)..=12);
        let w = r.gen_range(kw.max(1)..=12);
        let dims = InputDims::new(layer.in_channels(), h, w).unwrap();
        let x = uniform_vec(&mut r, dims.len());
        let t = conv_to_toeplitz(&layer, dims).unwrap();
        let tx = t.matrix.matvec(&x);
        let reference = naive_conv(&layer, &x, dims);
        conv_dev = conv_dev.max(max_abs_diff(&tx, &reference));

        let (patches, with_bias) = unroll_forward(&layer, &x, dims).unwrap();
        let positions = t.output_dims.height * t.output_dims.width;
        let unbiased: Vec<f64> = with_bias
            .iter()
            .enumerate()
            .map(|(k, v)| v - layer.bias()[k / positions])
            .collect();
        unroll_dev = unroll_dev.max(max_abs_diff(&unbiased, &tx));
        unroll_dev = unroll_dev.max(max_abs_diff(&patches.rolled_product(), &tx));
        let u = unrolled_operator_matrix(&layer, dims).unwrap();
        matrix_dev = matrix_dev.max(max_abs_diff(u.data(), t.matrix.data()));
    }
    let elapsed = start.elapsed();
    Outcome::new(
        conv_dev <= 1e-9 && unroll_dev <= 1e-9 && matrix_dev <= 1e-12 && within(elapsed, 30),
        format!(
            "200 cases, |T·x - conv(x)| {conv_dev:.2e}, |unroll - T·x| {unroll_dev:.2e}, \
             operator matrices {matrix_dev:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn spectrum_cross_check() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2002);
    let (mut worst_rel, mut worst_excess) = (0.0f64, f64::NEG_INFINITY);
    for case in 0..50 {
        let mut layer = random_conv(&mut r, 3, 3, 1, 1);
        if case % 2 == 0 {
            layer = strip_padding(&layer);
        }
        let dims = InputDims::new(layer.in_channels(), 8, 8).unwrap();
        let spectrum = conv_spectrum_fft(&layer, dims).unwrap();
        let circulant = explicit_circulant(&layer, spectrum.grid_height, spectrum.grid_width);
        let sigma_circ = singular_values_exact_with_limit(&circulant, usize::MAX).unwrap()[0];
        worst_rel = worst_rel.max((spectrum.sigma_max - sigma_circ).abs() / sigma_circ);

        let toeplitz = conv_to_toeplitz(&layer, dims).unwrap();
        let sigma_zero = singular_values_exact_with_limit(&toeplitz.matrix, usize::MAX).unwrap()[0];
        worst_excess = worst_excess.max(sigma_zero / sigma_circ - 1.0);
    }
    let elapsed = start.elapsed();
    Outcome::new(
        worst_rel <= 1e-6 && worst_excess <= 1e-6 && within(elapsed, 60),
        format!(
            "50 cases, fft vs explicit circulant rel {worst_rel:.2e}, \
             max σ_zero/σ_circ - 1 = {worst_excess:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn strip_padding(layer: &ConvLayer) -> ConvLayer {
    let (kh, kw) = layer.kernel_size();
    ConvLayer::new(
        layer.out_channels(),
        layer.in_channels(),
        kh,
        kw,
        layer.kernel().to_vec(),
        layer.bias().to_vec(),
        (1, 1),
        (0, 0),
    )
    .unwrap()
}

fn power_vs_svd() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3003);
    let (mut converged, mut worst_rel) = (0usize, 0.0f64);
    for k in 0..500u64 {
        let rows = r.gen_range(1..=200);
        let cols = r.gen_range(1..=60);
        let m = Matrix::random_uniform(rows, cols, 10_000 + k);
        let est = spectral_norm_power(&m, &PowerIterConfig { seed: k, ..Default::default() }).unwrap();
        if est.converged {
            converged += 1;
            let exact = singular_values_exact_with_limit(&m, usize::MAX).unwrap()[0];
            worst_rel = worst_rel.max((est.sigma_max - exact).abs() / exact);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        converged >= 495 && worst_rel <= 1e-6 && within(elapsed, 60),
        format!(
            "{converged}/500 converged, worst relative error {worst_rel:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn bound_validity() -> Outcome {
    let start = Instant::now();
    let mut r = rng(4004);
    let (mut worst_ratio, mut violations) = (0.0f64, 0usize);
    for _ in 0..20 {
        let net = random_relu_network(&mut r);
        let bound = trivial_bound(&net, &BoundConfig::default()).unwrap().trivial;
        let n = net.input_len();
        for p in 0..10_000 {
            let x = uniform_vec(&mut r, n);
            // Half the pairs are close, where local slopes dominate.
            let scale = if p % 2 == 0 { 1.0 } else { 1e-3 };
            let y: Vec<f64> = x.iter().map(|v| v + scale * r.gen_range(-1.0..1.0)).collect();
            let d_in = distance2(&x, &y);
            if d_in == 0.0 {
                continue;
            }
            let q = distance2(&net.forward(&x, Stop::Logits).unwrap(), &net.forward(&y, Stop::Logits).unwrap()) / d_in;
            worst_ratio = worst_ratio.max(q / bound);
            if q > bound * (1.0 + 1e-6) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        violations == 0 && within(elapsed, 120),
        format!(
            "20 networks × 10⁴ pairs, {violations} violations, max quotient/bound {worst_ratio:.4}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct Mnist {
    train: Dataset,
    test: Dataset,
}

fn load_mnist() -> Result<Mnist, String> {
    let dir = data_root().join("mnist");
    let train = load_mnist_dir(&dir, Split::Train).map_err(|e| e.to_string())?;
    let test = load_mnist_dir(&dir, Split::Test).map_err(|e| e.to_string())?;
    Ok(Mnist { train, test })
}

fn mnist_training(mnist: &Mnist) -> (Outcome, Network) {
    let start = Instant::now();
    let arch = mlp_default(mnist.train.dims()).unwrap();
    let cfg = TrainConfig { seed: 1, ..TrainConfig::default() };
    let net = train(&arch, &mnist.train, &cfg).unwrap();
    let acc = evaluate(&net, &mnist.test).unwrap();
    let elapsed = start.elapsed();
    (
        Outcome::new(
            acc >= 0.95,
            format!("test accuracy {:.2}% after 4 epochs, {:.1}s", acc * 100.0, elapsed.as_secs_f64()),
        ),
        net,
    )
}

fn gap_on_trained(net: &Network, test: &Dataset) -> Outcome {
    let bound = trivial_bound(net, &BoundConfig::default()).unwrap().trivial;
    let run = run_algorithm1(net, test, &EmpiricalConfig::new(500, 7)).unwrap();
    let ratio = bound / run.global_max;
    Outcome::new(
        ratio >= 10.0,
        format!(
            "trivial {bound:.3} / empirical max {:.3} (N=500, logits) = {ratio:.1}x",
            run.global_max
        ),
    )
}

fn convergence_shape(net: &Network, test: &Dataset) -> Outcome {
    let start = Instant::now();
    let runs: Vec<_> = [50, 250, 500, 1000, 2000]
        .iter()
        .map(|&n| run_algorithm1(net, test, &EmpiricalConfig::new(n, 7)).unwrap())
        .collect();
    let rows = convergence_table(&runs);
    let increasing = rows.windows(2).all(|w| w[1].avg_emp > w[0].avg_emp);
    let bounded = rows.iter().all(|r| r.avg_emp <= r.max_emp);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{}: {:.3}/{:.3}", r.set_size, r.avg_emp, r.max_emp))
        .collect();
    let elapsed = start.elapsed();
    Outcome::new(
        increasing && bounded && within(elapsed, 600),
        format!("N: avg/max {}, {:.1}s", table.join(", "), elapsed.as_secs_f64()),
    )
}

fn literal_equivalence() -> Outcome {
    let mut r = rng(8008);
    let mut batches = 0usize;
    let mut mismatches = 0usize;
    // Five runs of four batches, set sizes between 2 and 12.
    for run in 0..5u64 {
        let net = random_relu_network(&mut r);
        let set_size = r.gen_range(2..=12);
        let data = synthetic_dataset(net.input_dims(), set_size * 4 + r.gen_range(0..set_size), 50 + run).unwrap();
        let mut cfg = EmpiricalConfig::new(set_size, run);
        cfg.retain_quotients = true;
        let cached = run_algorithm1(&net, &data, &cfg).unwrap();
        let literal = run_algorithm1_literal(&net, &data, &cfg).unwrap();
        batches += cached.per_batch_max.len();
        let mut a = cached.all_quotients.unwrap();
        let mut b = literal.all_quotients.unwrap();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.to_bits() != y.to_bits()) {
            mismatches += 1;
        }
        if cached.per_batch_max != literal.per_batch_max {
            mismatches += 1;
        }
    }
    Outcome::new(
        batches == 20 && mismatches == 0,
        format!("{batches} batches, {mismatches} mismatching runs"),
    )
}

fn gradient_check() -> Outcome {
    let dims = InputDims::new(1, 4, 4).unwrap();
    let conv = ConvLayer::new(2, 1, 2, 2, vec![0.0; 8], vec![0.0; 2], (2, 2), (0, 0)).unwrap();
    let layers = vec![
        Layer::Conv(conv),
        Layer::Activation(ActivationKind::Relu),
        Layer::Dense(DenseLayer::new(Matrix::zeros(3, 8), vec![0.0; 3]).unwrap()),
        Layer::Activation(ActivationKind::LogSoftmax),
    ];
    let net = init_network(&Network::new(dims, layers).unwrap(), 9);
    let params = parameters(&net);
    let mut r = rng(9009);
    let images = uniform_vec(&mut r, 3 * dims.len());
    let labels = [0u8, 2, 1];
    let (_, grads) = loss_and_gradients(&net, &images, &labels);
    let analytic = flatten_gradients(&grads);

    let loss = |p: &[f64]| -> f64 {
        let n = with_parameters(&net, p).unwrap();
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(k, &l)| -n.forward(&images[k * dims.len()..(k + 1) * dims.len()], Stop::Full).unwrap()[l as usize])
            .sum();
        total / labels.len() as f64
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[i] += h;
        minus[i] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Outcome::new(
        params.len() <= 50 && worst <= 1e-4,
        format!("{} parameters, worst relative difference {worst:.2e}", params.len()),
    )
}

fn gap_fixtures() -> Outcome {
    let a = gap_report(2041.604, Some(800.502), 18.91).unwrap();
    let b = gap_report(733.248, None, 2.25).unwrap();
    let tight = a.tight_over_emp.unwrap_or(f64::NAN);
    let pass = (a.trivial_over_emp - 107.96).abs() <= 0.01
        && (tight - 42.33).abs() <= 0.01
        && (b.trivial_over_emp - 325.9).abs() <= 0.1
        && b.tight_over_emp.is_none();
    Outcome::new(
        pass,
        format!(
            "{:.2}x / {tight:.2}x and {:.2}x",
            a.trivial_over_emp, b.trivial_over_emp
        ),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn report(id: usize, name: &str, outcome: &Outcome) {
    let tag = if outcome.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {name}: {}", outcome.detail);
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "toeplitz/unroll equivalence", toeplitz_unroll_equivalence()),
        (2, "spectrum cross-check", spectrum_cross_check()),
        (3, "power iteration vs SVD", power_vs_svd()),
        (4, "bound validity", bound_validity()),
    ];
    for (id, name, o) in &results {
        report(*id, name, o);
    }
    let mut later = Vec::new();
    match load_mnist() {
        Ok(mnist) => {
            let (trained, net) = mnist_training(&mnist);
            report(5, "mnist training", &trained);
            later.push((5, "mnist training", trained));
            for (id, name, o) in [
                (6, "gap on trained mlp", gap_on_trained(&net, &mnist.test)),
                (7, "convergence shape", convergence_shape(&net, &mnist.test)),
            ] {
                report(id, name, &o);
                later.push((id, name, o));
            }
        }
        Err(e) => {
            for (id, name) in [(5, "mnist training"), (6, "gap on trained mlp"), (7, "convergence shape")] {
                let o = Outcome::new(false, format!("MNIST unavailable: {e}"));
                report(id, name, &o);
                later.push((id, name, o));
            }
        }
    }
    for (id, name, o) in [
        (8, "cached vs literal empirical", literal_equivalence()),
        (9, "gradient check", gradient_check()),
        (10, "gap report fixtures", gap_fixtures()),
    ] {
        report(id, name, &o);
        later.push((id, name, o));
    }
    results.extend(later);
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
