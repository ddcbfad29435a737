//! Labelled greyscale image datasets: IDX and CSV ingestion, seeded
//! train/fitness splitting, batching and small synthetic tasks.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::{Scalar, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("inconsistent dataset: {0}")]
    Consistency(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("configuration error: {0}")]
    Config(String),
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Images in `[0, 1]` stored as `(n, height, width, 1)` plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    height: usize,
    width: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        height: usize,
        width: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DatasetError> {
        if labels.is_empty() {
            return Err(DatasetError::Consistency("dataset is empty".into()));
        }
        if height == 0 || width == 0 {
            return Err(DatasetError::Consistency(
                "image size must be positive".into(),
            ));
        }
        if images.len() != labels.len() * height * width {
            return Err(DatasetError::Consistency(format!(
                "{} pixel values for {} images of {height}x{width}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DatasetError::Range(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if let Some(bad) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::Range(format!("pixel {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            images,
            labels,
            num_classes,
        })
    }

    /// Builds from raw pixel bytes, scaling by 1/255; the class count is
    /// `max label + 1`.
    pub fn from_bytes(
        height: usize,
        width: usize,
        pixels: &[u8],
        labels: Vec<usize>,
    ) -> Result<Self, DatasetError> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let images = pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Self::new(height, width, images, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let len = self.height * self.width;
        &self.images[index * len..(index + 1) * len]
    }

    /// Raises the class count, e.g. when a split loses the top label.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self, DatasetError> {
        if num_classes < self.num_classes {
            return Err(DatasetError::Range(format!(
                "cannot shrink {} classes to {num_classes}",
                self.num_classes
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Pixel bytes, the inverse of the 1/255 scaling.
    pub fn pixel_bytes(&self) -> Vec<u8> {
        self.images
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self, DatasetError> {
        let len = self.height * self.width;
        let mut images = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.height, self.width, images, labels, self.num_classes)
    }

    /// `(batch, height, width, 1)` tensor of the selected images.
    pub fn gather<T: Scalar>(&self, indices: &[usize]) -> Tensor<T> {
        let mut data = Vec::with_capacity(indices.len() * self.height * self.width);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64(v as f64)));
        }
        Tensor::new(vec![indices.len(), self.height, self.width, 1], data)
            .expect("gathered shape matches")
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| DatasetError::Format(format!("{what}: truncated header")))
}

/// Parses IDX image (`0x00000803`) and label (`0x00000801`) payloads.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset, DatasetError> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DatasetError::Format(format!(
            "images magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let pixels = &images[16..];
    if pixels.len() != count * rows * cols {
        return Err(DatasetError::Format(format!(
            "images payload has {} bytes, header promises {count}x{rows}x{cols}",
            pixels.len()
        )));
    }

    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DatasetError::Format(format!(
            "labels magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = be_u32(labels, 4, "labels")? as usize;
    let label_bytes = &labels[8..];
    if label_bytes.len() != label_count {
        return Err(DatasetError::Format(format!(
            "labels payload has {} bytes, header promises {label_count}",
            label_bytes.len()
        )));
    }
    if label_count != count {
        return Err(DatasetError::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }
    LabeledDataset::from_bytes(
        rows,
        cols,
        pixels,
        label_bytes.iter().map(|&l| l as usize).collect(),
    )
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset, DatasetError> {
    parse_idx(&read_file(images_path)?, &read_file(labels_path)?)
}

/// IDX image file bytes: magic, count, rows, cols (big-endian u32), pixels.
pub fn encode_idx_images(dataset: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + dataset.images.len());
    for word in [
        IDX_IMAGES_MAGIC,
        dataset.len() as u32,
        dataset.height as u32,
        dataset.width as u32,
    ] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend(dataset.pixel_bytes());
    out
}

/// IDX label file bytes: magic, count (big-endian u32), one byte per label.
pub fn encode_idx_labels(dataset: &LabeledDataset) -> Result<Vec<u8>, DatasetError> {
    let mut out = Vec::with_capacity(8 + dataset.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_be_bytes());
    for &l in &dataset.labels {
        out.push(
            u8::try_from(l)
                .map_err(|_| DatasetError::Range(format!("label {l} does not fit a byte")))?,
        );
    }
    Ok(out)
}

pub fn write_idx(
    dataset: &LabeledDataset,
    images_path: &Path,
    labels_path: &Path,
) -> Result<(), DatasetError> {
    let write = |path: &Path, bytes: Vec<u8>| {
        fs::write(path, bytes).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(images_path, encode_idx_images(dataset))?;
    write(labels_path, encode_idx_labels(dataset)?)
}

/// Comma-separated, no header, one image per row: `label,p0,p1,...`.
pub fn parse_csv(text: &str, height: usize, width: usize) -> Result<LabeledDataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let expected = 1 + height * width;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DatasetError::Format(format!("row {}: {e}", row + 1)))?;
        if record.len() != expected {
            return Err(DatasetError::Format(format!(
                "row {} has {} fields, expected {expected}",
                row + 1,
                record.len()
            )));
        }
        let label = record[0].parse::<usize>().map_err(|_| {
            DatasetError::Format(format!("row {}: bad label `{}`", row + 1, &record[0]))
        })?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let value: i64 = field.parse().map_err(|_| {
                DatasetError::Format(format!("row {}: bad pixel `{field}`", row + 1))
            })?;
            let byte = u8::try_from(value).map_err(|_| {
                DatasetError::Range(format!("row {}: pixel {value} outside 0..=255", row + 1))
            })?;
            pixels.push(byte);
        }
    }
    if labels.is_empty() {
        return Err(DatasetError::Format("no rows".into()));
    }
    LabeledDataset::from_bytes(height, width, &pixels, labels)
}

pub fn load_csv(path: &Path, height: usize, width: usize) -> Result<LabeledDataset, DatasetError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| DatasetError::Format(format!("{} is not UTF-8", path.display())))?;
    parse_csv(&text, height, width)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Seeded permutation; the first `floor(n * fraction)` examples train, the
/// rest score fitness. Both parts keep the parent's class count.
pub fn split(
    dataset: &LabeledDataset,
    spec: SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::Config(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let n = dataset.len();
    let n_train = (n as f64 * spec.train_fraction).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(DatasetError::Config(format!(
            "train_fraction {} leaves an empty part of {n} examples",
            spec.train_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok((
        dataset.subset(&order[..n_train])?,
        dataset.subset(&order[n_train..])?,
    ))
}

/// Consecutive index ranges of at most `batch_size`; the last may be short.
pub fn batch_ranges(n: usize, batch_size: usize) -> impl Iterator<Item = Range<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    (0..n)
        .step_by(batch_size)
        .map(move |start| start..(start + batch_size).min(n))
}

/// Small generated two-class 8x8-style tasks for desk-scale runs.
pub mod synthetic {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Task {
        /// A bright 2x2 patch in the left (class 0) or right (class 1) half.
        /// Linearly separable.
        LeftRight,
        /// A full-length horizontal (class 0) or vertical (class 1) bar.
        Bars,
    }

    /// `n` images of `size x size` with uniform background noise of
    /// amplitude `noise` (in pixel bytes); classes alternate.
    pub fn generate(task: Task, n: usize, size: usize, noise: u8, seed: u64) -> LabeledDataset {
        assert!(size >= 4, "synthetic images need at least 4x4 pixels");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pixels = Vec::with_capacity(n * size * size);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            let mut img: Vec<u8> = (0..size * size)
                .map(|_| {
                    if noise == 0 {
                        0
                    } else {
                        rng.gen_range(0..=noise)
                    }
                })
                .collect();
            match task {
                Task::LeftRight => {
                    let half = size / 2;
                    let x0 = rng.gen_range(0..half - 1) + label * half;
                    let y0 = rng.gen_range(0..size - 1);
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        img[(y0 + dy) * size + x0 + dx] = 255;
                    }
                }
                Task::Bars => {
                    let at = rng.gen_range(0..size);
                    for t in 0..size {
                        let idx = if label == 0 {
                            at * size + t
                        } else {
                            t * size + at
                        };
                        img[idx] = 255;
                    }
                }
            }
            pixels.extend(img);
            labels.push(label);
        }
        LabeledDataset::from_bytes(size, size, &pixels, labels)
            .expect("generated dataset is well formed")
            .with_num_classes(2)
            .expect("two classes")
    }
}
