//! In-memory datasets, seeded batch sampling, and a synthetic generator.

mod formats;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use formats::{
    load_cifar10_bin, load_idx, parse_cifar10, parse_idx_images, parse_idx_labels, CIFAR_MEAN, CIFAR_RECORD,
    CIFAR_STD,
};

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

/// Samples stacked along the leading axis.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows `start..end` (zero-based, half-open).
    pub fn slice(&self, start: usize, end: usize) -> Result<Batch> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!("slice {start}..{end} of a batch of {}", self.len())));
        }
        let rows: Vec<usize> = (start..end).collect();
        Ok(Batch {
            inputs: self.inputs.select_rows(&rows)?,
            labels: self.labels[start..end].to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.rank() < 2 || inputs.shape()[0] != labels.len() {
            return Err(Error::CountMismatch { images: inputs.shape().first().copied().unwrap_or(0), labels: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange { label, classes: num_classes });
        }
        Ok(Dataset { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample.
    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        Ok(Batch {
            inputs: self.inputs.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        let b = self.batch(&idx)?;
        Dataset::new(b.inputs, b.labels, self.num_classes)
    }

    pub fn cast(&self, dtype: DType) -> Dataset {
        Dataset { inputs: self.inputs.cast(dtype), labels: self.labels.clone(), num_classes: self.num_classes }
    }

    pub fn bit_eq(&self, other: &Dataset) -> bool {
        self.num_classes == other.num_classes && self.labels == other.labels && self.inputs.bit_eq(&other.inputs)
    }
}

/// Anything that hands out batches one at a time.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<Batch>;
}

/// Shuffles without replacement; each epoch is a fresh seeded permutation and
/// a trailing partial batch is dropped.
#[derive(Debug, Clone)]
pub struct BatchIterator<'a> {
    data: &'a Dataset,
    batch_size: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
}

impl<'a> BatchIterator<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > data.len() {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch_size} for a dataset of {} samples",
                data.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        Ok(BatchIterator { data, batch_size, rng, order, pos: 0, epoch: 0 })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len() / self.batch_size
    }

    /// Number of completed reshuffles.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Indices of the next batch, reshuffling when the epoch runs out.
    pub fn next_indices(&mut self) -> &[usize] {
        if self.pos + self.batch_size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let start = self.pos;
        self.pos += self.batch_size;
        &self.order[start..self.pos]
    }
}

impl BatchSource for BatchIterator<'_> {
    fn next_batch(&mut self) -> Result<Batch> {
        let data = self.data;
        let idx = self.next_indices().to_vec();
        data.batch(&idx)
    }
}

/// A fixed list of batches that runs dry.
#[derive(Debug, Clone)]
pub struct FixedBatches {
    batches: Vec<Batch>,
    next: usize,
}

impl FixedBatches {
    pub fn new(batches: Vec<Batch>) -> Self {
        FixedBatches { batches, next: 0 }
    }
}

impl BatchSource for FixedBatches {
    fn next_batch(&mut self) -> Result<Batch> {
        let b = self.batches.get(self.next).cloned().ok_or(Error::DataExhausted { iteration: self.next })?;
        self.next += 1;
        Ok(b)
    }
}

/// Gaussian clusters with means one unit apart, samples interleaved by class.
///
/// With `dim >= classes` the means are `e_c / √2`; otherwise they sit on the
/// first axis at unit spacing, centred on the origin.
pub fn gen_blobs(classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "blobs need classes >= 2, per_class >= 1, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread must be finite and non-negative, got {spread}")));
    }
    let mean = |c: usize| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        if dim >= classes {
            m[c] = std::f64::consts::FRAC_1_SQRT_2;
        } else {
            m[0] = c as f64 - (classes - 1) as f64 / 2.0;
        }
        m
    };
    let means: Vec<Vec<f64>> = (0..classes).map(mean).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for &m in &means[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(m + spread * z);
        }
        labels.push(c);
    }
    Dataset::new(Tensor::new(&[n, dim], data)?, labels, classes)
}
