//! Empirical Lipschitz estimation over a dataset.
//!
//! The dataset is shuffled, cut into batches of `N` images, and within each batch the quotient
//! `‖f(x₂) − f(x₁)‖₂ / ‖x₂ − x₁‖₂` is evaluated over every unordered pair. The per-batch maxima,
//! their average and the overall maximum are what the convergence tables report.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::distance2;
use crate::network::{Network, Stop};

/// How the running maximum behaves across batches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    /// Each batch contributes its own maximum.
    #[default]
    PerBatchReset,
    /// The maximum is carried across batches, so the recorded list never decreases.
    Cumulative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConfig {
    pub set_size: usize,
    pub mode: BatchMode,
    pub output_space: Stop,
    pub seed: u64,
    /// Evaluate a seeded uniform sample of this many pairs per batch instead of all of them.
    pub max_pairs_per_batch: Option<usize>,
    /// Keep every quotient in [`EmpiricalRun::all_quotients`].
    pub retain_quotients: bool,
}

impl EmpiricalConfig {
    pub fn new(set_size: usize, seed: u64) -> Self {
        Self {
            set_size,
            mode: BatchMode::default(),
            output_space: Stop::Logits,
            seed,
            max_pairs_per_batch: None,
            retain_quotients: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.set_size < 2 {
            return Err(Error::Config(format!(
                "set size must be at least 2, got {}",
                self.set_size
            )));
        }
        if self.max_pairs_per_batch == Some(0) {
            return Err(Error::Config("max pairs per batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRun {
    pub set_size: usize,
    pub mode: BatchMode,
    /// One value per batch, as selected by the mode.
    pub per_batch_max: Vec<f64>,
    pub global_max: f64,
    pub avg_of_batch_values: f64,
    /// Mean over every evaluated quotient (not over batch maxima).
    pub quotient_mean: f64,
    pub all_quotients: Option<Vec<f64>>,
    /// Pairs visited, including the skipped ones.
    pub pairs_evaluated: u64,
    /// Pairs whose two images are identical.
    pub skipped_identical: u64,
}

#[derive(Default)]
struct BatchResult {
    max: f64,
    sum: f64,
    count: u64,
    visited: u64,
    skipped: u64,
    quotients: Vec<f64>,
}

fn quotient(out1: &[f64], out2: &[f64], img1: &[f64], img2: &[f64]) -> Option<f64> {
    let dx = distance2(img2, img1);
    if dx == 0.0 {
        return None;
    }
    Some(distance2(out2, out1) / dx)
}

fn check_inputs(net: &Network, dataset: &Dataset, cfg: &EmpiricalConfig) -> Result<usize> {
    cfg.validate()?;
    if net.input_dims() != dataset.dims() {
        return Err(Error::Shape(format!(
            "network input {} does not match dataset images of {}",
            net.input_dims(),
            dataset.dims()
        )));
    }
    if dataset.len() < 2 {
        return Err(Error::Config("dataset needs at least two samples".into()));
    }
    let batches = dataset.len() / cfg.set_size;
    if batches == 0 {
        return Err(Error::Config(format!(
            "set size {} exceeds the {} samples of {}",
            cfg.set_size,
            dataset.len(),
            dataset.name()
        )));
    }
    Ok(batches)
}

/// Seeded shuffle of all sample indices, cut into full batches; the remainder is dropped.
fn make_batches(dataset: &Dataset, cfg: &EmpiricalConfig, count: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    order
        .chunks_exact(cfg.set_size)
        .take(count)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Unordered pairs `(i, j)`, `i < j`, of positions within a batch, in lexicographic order.
fn batch_pairs(n: usize, cfg: &EmpiricalConfig, batch_index: usize) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let all = || (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)));
    match cfg.max_pairs_per_batch {
        Some(k) if k < total => {
            let stream = (batch_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ stream);
            let mut picked = index::sample(&mut rng, total, k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|p| pair_from_index(n, p)).collect()
        }
        _ => all().collect(),
    }
}

/// Inverse of the lexicographic enumeration of pairs `(i, j)` with `i < j < n`.
fn pair_from_index(n: usize, mut p: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

fn evaluate_batch(
    pairs: &[(usize, usize)],
    retain: bool,
    mut pair_quotient: impl FnMut(usize, usize) -> Option<f64>,
) -> BatchResult {
    let mut r = BatchResult::default();
    for &(i, j) in pairs {
        r.visited += 1;
        match pair_quotient(i, j) {
            Some(q) => {
                r.max = r.max.max(q);
                r.sum += q;
                r.count += 1;
                if retain {
                    r.quotients.push(q);
                }
            }
            None => r.skipped += 1,
        }
    }
    r
}

/// Batched empirical estimation with each image's forward pass computed once per batch.
pub fn run_algorithm1(net: &Network, dataset: &Dataset, cfg: &EmpiricalConfig) -> Result<EmpiricalRun> {
    let count = check_inputs(net, dataset, cfg)?;
    let batches = make_batches(dataset, cfg, count);
    let results: Vec<BatchResult> = batches
        .par_iter()
        .enumerate()
        .map(|(b, batch)| {
            let outputs: Vec<Vec<f64>> = batch
                .iter()
                .map(|&idx| net.forward_unchecked(dataset.image(idx), cfg.output_space))
                .collect();
            let pairs = batch_pairs(batch.len(), cfg, b);
            evaluate_batch(&pairs, cfg.retain_quotients, |i, j| {
                let (a, b) = (batch[i], batch[j]);
                quotient(&outputs[i], &outputs[j], dataset.image(a), dataset.image(b))
            })
        })
        .collect();
    Ok(assemble(cfg, results))
}

/// Reference implementation that runs the network on both images of every pair, exactly as
/// the pairwise loop is usually written. Quadratically more forward passes than
/// [`run_algorithm1`]; meant for checking it.
pub fn run_algorithm1_literal(
    net: &Network,
    dataset: &Dataset,
    cfg: &EmpiricalConfig,
) -> Result<EmpiricalRun> {
    let count = check_inputs(net, dataset, cfg)?;
    let batches = make_batches(dataset, cfg, count);
    let results = batches
        .iter()
        .enumerate()
        .map(|(b, batch)| {
            let pairs = batch_pairs(batch.len(), cfg, b);
            evaluate_batch(&pairs, cfg.retain_quotients, |i, j| {
                let (image1, image2) = (dataset.image(batch[i]), dataset.image(batch[j]));
                let output1 = net.forward_unchecked(image1, cfg.output_space);
                let output2 = net.forward_unchecked(image2, cfg.output_space);
                quotient(&output1, &output2, image1, image2)
            })
        })
        .collect();
    Ok(assemble(cfg, results))
}

fn assemble(cfg: &EmpiricalConfig, results: Vec<BatchResult>) -> EmpiricalRun {
    let mut per_batch_max = Vec::with_capacity(results.len());
    let mut running = 0.0f64;
    let (mut sum, mut count, mut visited, mut skipped) = (0.0, 0u64, 0u64, 0u64);
    let mut quotients = cfg.retain_quotients.then(Vec::new);
    for r in results {
        let value = match cfg.mode {
            BatchMode::PerBatchReset => r.max,
            BatchMode::Cumulative => running.max(r.max),
        };
        running = running.max(r.max);
        per_batch_max.push(value);
        sum += r.sum;
        count += r.count;
        visited += r.visited;
        skipped += r.skipped;
        if let Some(q) = quotients.as_mut() {
            q.extend(r.quotients);
        }
    }
    let avg = per_batch_max.iter().sum::<f64>() / per_batch_max.len() as f64;
    EmpiricalRun {
        set_size: cfg.set_size,
        mode: cfg.mode,
        global_max: running,
        avg_of_batch_values: avg,
        per_batch_max,
        quotient_mean: if count > 0 { sum / count as f64 } else { 0.0 },
        all_quotients: quotients,
        pairs_evaluated: visited,
        skipped_identical: skipped,
    }
}

impl EmpiricalRun {
    /// Run metadata as JSON (quotients omitted).
    pub fn metadata(&self, seed: u64, output_space: Stop) -> serde_json::Value {
        serde_json::json!({
            "seed": seed,
            "mode": self.mode,
            "N": self.set_size,
            "output_space": output_space,
            "batches": self.per_batch_max.len(),
            "pairs_evaluated": self.pairs_evaluated,
            "skipped_identical": self.skipped_identical,
            "global_max": self.global_max,
            "avg_of_batch_values": self.avg_of_batch_values,
            "quotient_mean": self.quotient_mean,
            "per_batch_max": self.per_batch_max,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub set_size: usize,
    pub avg_emp: f64,
    pub max_emp: f64,
}

/// One row per run: set size, average of the per-batch values, overall maximum.
pub fn convergence_table(runs: &[EmpiricalRun]) -> Vec<ConvergenceRow> {
    runs.iter()
        .map(|r| ConvergenceRow {
            set_size: r.set_size,
            avg_emp: r.avg_of_batch_values,
            max_emp: r.global_max,
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("N,avg_emp,max_emp\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.set_size, r.avg_emp, r.max_emp));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width histogram over `range`, or over `[min, max]` of the values when absent.
/// A value on the upper edge lands in the last bin; values outside an explicit range are
/// not counted.
pub fn build_histogram(values: &[f64], n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::Domain("histogram of no values".into()));
    }
    if n_bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("histogram values must be finite".into()));
    }
    let (mut lo, mut hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Domain(format!("invalid histogram range [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None => values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
    };
    if lo == hi {
        let eps = lo.abs().max(1.0) * 1e-6;
        lo -= eps;
        hi += eps;
    }
    let width = (hi - lo) / n_bins as f64;
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|k| if k == n_bins { hi } else { lo + width * k as f64 })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let bin = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.bin_edges[k], self.bin_edges[k + 1], c));
        }
        s
    }
}
