//! MNIST (IDX) and CIFAR-10 (binary) loaders, plus seeded synthetic datasets.
//!
//! Pixels are scaled by 1/255 into `[0, 1]`; [`Dataset::standardize`] optionally rescales
//! per channel afterwards.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::InputDims;

pub const NUM_CLASSES: usize = 10;

/// Environment variable naming the directory that holds `mnist/` and `cifar10/`.
pub const DATA_ROOT_ENV: &str = "LIPBOUND_DATA_ROOT";

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labelled images stored contiguously, channel-major per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    dims: InputDims,
    pixels: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, dims: InputDims, pixels: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        dims.validate()?;
        if pixels.len() != labels.len() * dims.len() {
            return Err(Error::Consistency(format!(
                "{} labels need {} pixel values at {dims}, got {}",
                labels.len(),
                labels.len() * dims.len(),
                pixels.len()
            )));
        }
        if let Some(pos) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Validation(format!(
                "label {} at sample {pos} is outside 0..{NUM_CLASSES}",
                labels[pos]
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite pixel value".into()));
        }
        Ok(Self {
            name: name.into(),
            dims,
            pixels,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> InputDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[f64] {
        let n = self.dims.len();
        &self.pixels[index * n..(index + 1) * n]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// The first `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            dims: self.dims,
            pixels: self.pixels[..n * self.dims.len()].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Per-channel zero-mean, unit-variance rescaling. Returns the `(mean, std)` used per channel.
    pub fn standardize(&mut self) -> Vec<(f64, f64)> {
        let plane = self.dims.height * self.dims.width;
        let mut stats = Vec::with_capacity(self.dims.channels);
        for c in 0..self.dims.channels {
            let values = || {
                self.pixels
                    .chunks_exact(self.dims.len())
                    .flat_map(move |img| img[c * plane..(c + 1) * plane].iter().copied())
            };
            let count = (plane * self.len()).max(1) as f64;
            let mean = values().sum::<f64>() / count;
            let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            stats.push((mean, std));
        }
        let n = self.dims.len();
        for img in self.pixels.chunks_exact_mut(n) {
            for (c, &(mean, std)) in stats.iter().enumerate() {
                for v in &mut img[c * plane..(c + 1) * plane] {
                    *v = (*v - mean) / std;
                }
            }
        }
        stats
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("truncated header: file has {} bytes", bytes.len()),
        })
}

/// Parses IDX image and label files (big-endian headers, one byte per pixel/label).
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    let format_err = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let magic = be_u32(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_err(
            images_path,
            format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let body = &images[16..];
    if body.len() != count * rows * cols {
        return Err(format_err(
            images_path,
            format!(
                "header declares {count} images of {rows}x{cols} ({} bytes) but {} bytes follow",
                count * rows * cols,
                body.len()
            ),
        ));
    }

    let magic = be_u32(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_err(
            labels_path,
            format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        ));
    }
    let label_count = be_u32(&labels, 4, labels_path)? as usize;
    let label_body = &labels[8..];
    if label_body.len() != label_count {
        return Err(format_err(
            labels_path,
            format!(
                "header declares {label_count} labels but {} bytes follow",
                label_body.len()
            ),
        ));
    }
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {label_count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }

    let dims = InputDims::new(1, rows, cols)?;
    let pixels = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Dataset::new(format!("mnist-{split}"), dims, pixels, label_body.to_vec())
}

/// Parses CIFAR-10 binary batches: records of one label byte followed by 3072 channel-major
/// pixel bytes.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P], split: Split) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::Config("no CIFAR-10 batch files given".into()));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!(
                    "length {} is not a positive multiple of the {CIFAR_RECORD}-byte record",
                    bytes.len()
                ),
            });
        }
        for (r, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
            if record[0] as usize >= NUM_CLASSES {
                return Err(Error::Validation(format!(
                    "{} record {r}: label byte {} is outside 0..{NUM_CLASSES}",
                    path.display(),
                    record[0]
                )));
            }
            labels.push(record[0]);
            pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    Dataset::new(format!("cifar10-{split}"), InputDims::new(3, 32, 32)?, pixels, labels)
}

/// Standard MNIST file names under `dir`.
pub fn mnist_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Standard CIFAR-10 batch names under `dir` (or its `cifar-10-batches-bin/` child).
pub fn cifar10_paths(dir: &Path, split: Split) -> Vec<PathBuf> {
    let base = if dir.join("cifar-10-batches-bin").is_dir() {
        dir.join("cifar-10-batches-bin")
    } else {
        dir.to_path_buf()
    };
    match split {
        Split::Train => (1..=5)
            .map(|i| base.join(format!("data_batch_{i}.bin")))
            .collect(),
        Split::Test => vec![base.join("test_batch.bin")],
    }
}

fn require_exists(paths: &[&Path], what: &str) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            return Err(Error::Config(format!(
                "{what} file not found: expected {}",
                p.display()
            )));
        }
    }
    Ok(())
}

/// Loads MNIST from a directory holding the four standard IDX files.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir.as_ref(), split);
    require_exists(&[&images, &labels], "MNIST")?;
    load_mnist(images, labels, split)
}

pub fn load_cifar10_dir(dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let paths = cifar10_paths(dir.as_ref(), split);
    require_exists(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>(), "CIFAR-10")?;
    load_cifar10(&paths, split)
}

/// Dataset root from [`DATA_ROOT_ENV`], if set.
pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

/// Label of a synthetic image: the pixel group (flat index mod the class count) with the
/// highest mean.
pub fn synthetic_label(pixels: &[f64]) -> u8 {
    let groups = NUM_CLASSES.min(pixels.len());
    let mut sums = [0.0f64; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (i, &v) in pixels.iter().enumerate() {
        sums[i % groups] += v;
        counts[i % groups] += 1;
    }
    let mut best = 0;
    for g in 1..groups {
        if sums[g] / counts[g] as f64 > sums[best] / counts[best] as f64 {
            best = g;
        }
    }
    best as u8
}

/// Seeded pixels in `[0, 1]` whose labels follow [`synthetic_label`] with a wide margin: the
/// chosen group is drawn from `[0.5, 1]`, every other pixel from `[0, 0.5)`.
pub fn synthetic_dataset(dims: InputDims, n: usize, seed: u64) -> Result<Dataset> {
    dims.validate()?;
    if n == 0 {
        return Err(Error::Config("synthetic dataset needs at least one sample".into()));
    }
    let groups = NUM_CLASSES.min(dims.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * dims.len());
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.gen_range(0..groups);
        let start = pixels.len();
        for i in 0..dims.len() {
            pixels.push(if i % groups == class {
                rng.gen_range(0.5..=1.0)
            } else {
                rng.gen_range(0.0..0.5)
            });
        }
        let label = synthetic_label(&pixels[start..]);
        debug_assert_eq!(label as usize, class);
        labels.push(label);
    }
    Dataset::new(format!("synthetic-{dims}"), dims, pixels, labels)
}
