use std::fmt::Write as _;
use std::path::PathBuf;

use lipbound::bounds::{trivial_bound, BoundConfig};
use lipbound::conv::{conv_spectrum_fft, convert_network};
use lipbound::data::{
    data_root_from_env, load_cifar10_dir, load_mnist_dir, synthetic_dataset, Dataset, Split,
};
use lipbound::empirical::{build_histogram, convergence_csv, convergence_table, run_algorithm1, EmpiricalConfig};
use lipbound::fsutil::write_atomic;
use lipbound::linalg::PowerIterConfig;
use lipbound::network::{load_model, save_model, InputDims, Layer, Network, Stop};
use lipbound::trainer::{cnn_default, evaluate, mlp, mlp_default, train_with_log, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{
    BoundArgs, ConvertArgs, DataArgs, DatasetKind, EmpiricalArgs, SpectrumArgs, SplitArg, TrainArgs,
};
use crate::manifest::{sibling, RunManifest};
use crate::CliError;

/// Largest forward-pass deviation tolerated by `convert --check`.
const CONVERT_TOLERANCE: f64 = 1e-6;

fn data_root(args: &DataArgs) -> PathBuf {
    args.data_root
        .clone()
        .or_else(data_root_from_env)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn parse_dims(text: &str) -> Result<InputDims, CliError> {
    let parts: Vec<&str> = text.split(['x', 'X']).collect();
    let bad = || CliError::usage(format!("dimensions must look like CxHxW, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let n: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    Ok(InputDims::new(n[0], n[1], n[2])?)
}

/// Loads the requested split; synthetic data takes its shape from `dims` when given.
fn load_data(args: &DataArgs, split: Split, dims: Option<InputDims>) -> Result<Dataset, CliError> {
    match args.dataset {
        DatasetKind::Mnist => Ok(load_mnist_dir(data_root(args).join("mnist"), split)?),
        DatasetKind::Cifar10 => Ok(load_cifar10_dir(data_root(args).join("cifar10"), split)?),
        DatasetKind::Synthetic => {
            let dims = match dims {
                Some(d) => d,
                None => parse_dims(&args.synthetic_dims)?,
            };
            let (n, seed) = match split {
                Split::Train => (args.synthetic_size, 0),
                Split::Test => ((args.synthetic_size / 5).max(1), 1),
            };
            Ok(synthetic_dataset(dims, n, seed)?)
        }
    }
}

fn parse_arch(text: &str, input: InputDims) -> Result<Network, CliError> {
    match text {
        "mlp-default" => Ok(mlp_default(input)?),
        "cnn-default" => Ok(cnn_default(input)?),
        _ => {
            let hidden = text
                .strip_prefix("mlp:")
                .ok_or_else(|| CliError::usage(format!("unknown architecture {text:?}")))?;
            let widths: Vec<usize> = hidden
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse()
                        .ok()
                        .filter(|&w| w > 0)
                        .ok_or_else(|| CliError::usage(format!("bad hidden width {s:?} in {text:?}")))
                })
                .collect::<Result<_, _>>()?;
            Ok(mlp(input, &widths)?)
        }
    }
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let train_set = load_data(&args.data, Split::Train, None)?;
    let test_set = load_data(&args.data, Split::Test, Some(train_set.dims()))?;
    let arch = parse_arch(&args.arch, train_set.dims())?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let outcome = train_with_log(&arch, &train_set, Some(&test_set), &cfg)?;
    let mut csv = String::from("epoch,train_loss,test_acc\n");
    for e in &outcome.log {
        let acc = e.test_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{}", e.epoch, e.train_loss, acc).unwrap();
        eprintln!("epoch {}: train loss {:.4}, test accuracy {acc}", e.epoch, e.train_loss);
    }
    let accuracy = evaluate(&outcome.network, &test_set)?;
    println!("test accuracy: {:.4}", accuracy);

    let log_path = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".log.csv"));
    save_model(&outcome.network, &args.out)?;
    write_atomic(&log_path, csv.as_bytes())?;
    let mut manifest = RunManifest::new(
        "train",
        &serde_json::json!({ "args": args, "train": cfg }),
        args.seed,
    );
    manifest.artifacts = vec![args.out.clone(), log_path];
    manifest.write(&sibling(&args.out, ".manifest.json"))
}

pub fn bound(args: &BoundArgs) -> Result<(), CliError> {
    let net = load_model(&args.model)?;
    let cfg = BoundConfig {
        conv_method: args.conv_method.into(),
        power: PowerIterConfig { tol: args.tol, max_iters: args.max_iters, seed: args.seed },
        force: args.force,
    };
    let report = trivial_bound(&net, &cfg)?.with_comparisons(args.tight, args.empirical)?;
    eprint!("{}", report.render());
    if !report.all_converged() {
        eprintln!("warning: some layers did not converge; the bound is an estimate");
    }
    match &args.out {
        Some(out) => {
            write_atomic(out, report.to_json_pretty().as_bytes())?;
            let mut manifest = RunManifest::new("bound", args, args.seed);
            manifest.artifacts.push(out.clone());
            manifest.write(&sibling(out, ".manifest.json"))
        }
        None => {
            print!("{}", report.to_json_pretty());
            Ok(())
        }
    }
}

pub fn empirical(args: &EmpiricalArgs) -> Result<(), CliError> {
    if args.bins == 0 {
        return Err(CliError::usage("--bins must be at least 1"));
    }
    let net = load_model(&args.model)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let data = load_data(&args.data, split, Some(net.input_dims()))?;
    let mut runs = Vec::new();
    let mut histograms = Vec::new();
    let mut metadata = Vec::new();
    for &n in &args.set_size {
        let cfg = EmpiricalConfig {
            mode: args.mode.into(),
            output_space: args.output_space.into(),
            max_pairs_per_batch: args.max_pairs,
            retain_quotients: true,
            ..EmpiricalConfig::new(n, args.seed)
        };
        let mut run = run_algorithm1(&net, &data, &cfg)?;
        let quotients = run.all_quotients.take().unwrap_or_default();
        if !quotients.is_empty() {
            histograms.push((n, build_histogram(&quotients, args.bins, None)?));
        }
        eprintln!(
            "N={n}: avg {:.4}, max {:.4} over {} batches",
            run.avg_of_batch_values,
            run.global_max,
            run.per_batch_max.len()
        );
        metadata.push(run.metadata(args.seed, cfg.output_space));
        runs.push(run);
    }

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::from(lipbound::Error::Io { path: args.out_dir.clone(), source: e }))?;
    let mut manifest = RunManifest::new("empirical", args, args.seed);
    let table = convergence_csv(&convergence_table(&runs));
    print!("{table}");
    let path = args.out_dir.join("convergence.csv");
    write_atomic(&path, table.as_bytes())?;
    manifest.artifacts.push(path);
    for (n, h) in &histograms {
        let path = args.out_dir.join(format!("histogram_N{n}.csv"));
        write_atomic(&path, h.to_csv().as_bytes())?;
        manifest.artifacts.push(path);
    }
    let run_json = serde_json::json!({
        "model": args.model,
        "dataset": data.name(),
        "samples": data.len(),
        "runs": metadata,
    });
    let path = args.out_dir.join("run.json");
    let mut text = serde_json::to_string_pretty(&run_json).expect("metadata serialises");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    manifest.artifacts.push(path);
    manifest.write(&args.out_dir.join("manifest.json"))
}

pub fn convert(args: &ConvertArgs) -> Result<(), CliError> {
    let net = load_model(&args.model)?;
    let converted = convert_network(&net)?;
    let mut deviation = 0.0f64;
    if args.check > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        for _ in 0..args.check {
            let x: Vec<f64> = (0..net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = net.forward_unchecked(&x, Stop::Full);
            let b = converted.forward_unchecked(&x, Stop::Full);
            let d = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            deviation = deviation.max(if d.is_nan() { f64::INFINITY } else { d });
        }
        println!("max deviation over {} inputs: {deviation:e}", args.check);
        if deviation > CONVERT_TOLERANCE {
            return Err(CliError::numerical(format!(
                "converted network deviates by {deviation:e} (> {CONVERT_TOLERANCE:e})"
            )));
        }
    }
    save_model(&converted, &args.out)?;
    let mut manifest = RunManifest::new(
        "convert",
        &serde_json::json!({ "args": args, "max_deviation": deviation }),
        args.seed,
    );
    manifest.artifacts.push(args.out.clone());
    manifest.write(&sibling(&args.out, ".manifest.json"))
}

pub fn spectrum(args: &SpectrumArgs) -> Result<(), CliError> {
    let net = load_model(&args.model)?;
    let indices: Vec<usize> = match args.layer {
        Some(i) => {
            match net.layers().get(i) {
                Some(Layer::Conv(_)) => {}
                Some(other) => {
                    return Err(CliError::usage(format!("layer {i} is {}, not a convolution", other.kind_name())))
                }
                None => {
                    return Err(CliError::usage(format!(
                        "layer {i} does not exist; the model has {} layers",
                        net.layers().len()
                    )))
                }
            }
            vec![i]
        }
        None => (0..net.layers().len())
            .filter(|&i| matches!(net.layers()[i], Layer::Conv(_)))
            .collect(),
    };
    if indices.is_empty() {
        return Err(CliError::usage("the model has no convolution layers"));
    }
    let mut csv = String::from("layer,u,v,index,sigma\n");
    for &i in &indices {
        let Layer::Conv(conv) = &net.layers()[i] else { unreachable!() };
        let s = conv_spectrum_fft(conv, net.layer_input_dims(i))?;
        println!("layer {i}: sigma_max {} on a {}x{} grid", s.sigma_max, s.grid_height, s.grid_width);
        for u in 0..s.grid_height {
            for v in 0..s.grid_width {
                for (k, sigma) in s.at(u, v).iter().enumerate() {
                    writeln!(csv, "{i},{u},{v},{k},{sigma}").unwrap();
                }
            }
        }
    }
    write_atomic(&args.out, csv.as_bytes())?;
    let mut manifest = RunManifest::new("spectrum", args, 0);
    manifest.artifacts.push(args.out.clone());
    manifest.write(&sibling(&args.out, ".manifest.json"))
}
