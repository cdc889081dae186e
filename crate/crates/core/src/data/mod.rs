//! Dataset ingestion and view construction: seeded Gaussian blobs as the
//! primary test bed, IDX raster files, and the two-tier augmentation scheme
//! (strong views for training, light views for influence scoring).

pub mod augment;
pub mod blobs;
pub mod idx;

pub use augment::{augment, make_views, AugmentConfig, AugmentTier, StrongAugment, LightAugment};
pub use blobs::{chi_mean, make_blobs, make_blobs_separated};
pub use idx::load_idx;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::seeded;

/// What one flattened sample row means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SampleShape {
    Vector { dim: usize },
    Raster { height: usize, width: usize },
}

impl SampleShape {
    pub fn flat_dim(&self) -> usize {
        match *self {
            SampleShape::Vector { dim } => dim,
            SampleShape::Raster { height, width } => height * width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub source: String,
    pub shape: SampleShape,
    pub num_classes: usize,
}

/// Labelled flat samples. Rows of `samples` align with `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Tensor,
    pub labels: Vec<usize>,
    pub meta: DataMeta,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<usize>, meta: DataMeta) -> Result<Self> {
        if samples.shape().len() != 2 {
            return Err(Error::shape(
                "Dataset::new",
                "2-D samples".to_string(),
                format!("{:?}", samples.shape()),
            ));
        }
        if samples.rows() == 0 {
            return Err(Error::Contract("dataset must contain at least one sample".into()));
        }
        if samples.rows() != labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} labels", samples.rows()),
                format!("{}", labels.len()),
            ));
        }
        if samples.cols() != meta.shape.flat_dim() {
            return Err(Error::shape(
                "Dataset::new",
                format!("sample width {}", meta.shape.flat_dim()),
                format!("{}", samples.cols()),
            ));
        }
        if !samples.is_finite() {
            return Err(Error::Numeric("dataset contains non-finite features".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= meta.num_classes) {
            return Err(Error::Contract(format!(
                "label {bad} outside [0, {})",
                meta.num_classes
            )));
        }
        Ok(Dataset {
            samples,
            labels,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// Rows + labels for a batch of indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.samples.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The first `n` samples as their own dataset. `num_classes` is
    /// recomputed from the surviving labels.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        if n == 0 || n > self.len() {
            return Err(Error::config(
                "dataset.limit",
                format!("must lie in 1..={}, got {n}", self.len()),
            ));
        }
        let indices: Vec<usize> = (0..n).collect();
        let (samples, labels) = self.batch(&indices);
        let mut meta = self.meta.clone();
        meta.num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Dataset::new(samples, labels, meta)
    }

    /// Splits per class so both halves keep the class mix. The test side
    /// receives `ceil(test_fraction * class_count)` samples of each class.
    pub fn stratified_split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
            return Err(Error::config(
                "test_fraction",
                format!("must lie in (0, 1), got {test_fraction}"),
            ));
        }
        let mut rng = seeded(seed, "stratified-split");
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for class in 0..self.meta.num_classes {
            let mut members: Vec<usize> = (0..self.len())
                .filter(|&i| self.labels[i] == class)
                .collect();
            members.shuffle(&mut rng);
            let n_test = ((members.len() as f64) * test_fraction).ceil() as usize;
            let n_test = n_test.min(members.len());
            test_idx.extend_from_slice(&members[..n_test]);
            train_idx.extend_from_slice(&members[n_test..]);
        }
        // Deterministic output order regardless of per-class shuffles.
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        let build = |idx: &[usize]| -> Result<Dataset> {
            let (samples, labels) = self.batch(idx);
            Dataset::new(samples, labels, self.meta.clone())
        };
        Ok((build(&train_idx)?, build(&test_idx)?))
    }
}

/// The four views of one mini-batch. Rows stay aligned: every view's row `i`
/// derives from the same source sample.
#[derive(Debug, Clone)]
pub struct BatchViews {
    /// First strong augmentation, used as anchor input.
    pub view_a: Tensor,
    /// Second, independently drawn strong augmentation.
    pub view_b: Tensor,
    /// Unaugmented source rows, fed to the scoring model's online chain.
    pub tracin_view_a: Tensor,
    /// Lightly augmented rows, fed to the scoring model's target chain.
    pub tracin_view_b: Tensor,
    /// Present for evaluation and the supervised oracle only; training never
    /// reads labels.
    pub labels: Option<Vec<usize>>,
}

impl BatchViews {
    pub fn batch_size(&self) -> usize {
        self.view_a.rows()
    }
}
