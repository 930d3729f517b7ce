//! Datasets, loaders and client partitioning.

mod fds;
mod idx;
mod partition;
mod synthetic;

pub use fds::{decode_fds, encode_fds, read_fds, write_fds, FDS_MAGIC};
pub use idx::{decode_idx, encode_idx, load_fashion_mnist, load_idx, write_idx};
pub use partition::{partition, partition_iid, partition_noniid, PartitionScheme, PartitionSpec};
pub use synthetic::{synthetic_blobs, SyntheticSpec};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::rng;

/// Row-major feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    num_features: usize,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        num_features: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if num_features == 0 || num_classes == 0 {
            return Err(Error::config("datasets need at least one feature and one class"));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::config(format!(
                "{} feature values for {} examples of width {num_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            num_features,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn as_batch(&self) -> Batch<'_> {
        Batch::new(&self.features, &self.labels, self.num_features)
    }

    /// Contiguous rows `range` as a batch.
    pub fn slice_batch(&self, range: std::ops::Range<usize>) -> Batch<'_> {
        Batch::new(
            &self.features[range.start * self.num_features..range.end * self.num_features],
            &self.labels[range],
            self.num_features,
        )
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            num_features: self.num_features,
            num_classes: self.num_classes,
        }
    }

    /// Seeded random subset of `n` examples (order preserved).
    pub fn subsample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        if n > self.len() {
            return Err(Error::config(format!(
                "cannot subsample {n} examples from {}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::stream(seed, &[rng::SUBSAMPLE]));
        idx.truncate(n);
        idx.sort_unstable();
        Ok(self.subset(&idx))
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    pub(crate) fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = self.labels.iter().find(|&&y| y as usize >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

#[derive(Clone, Debug)]
pub struct DatasetSplits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// One client's local examples.
#[derive(Clone, Debug)]
pub struct ClientShard {
    pub client_id: usize,
    /// Positions of the shard's examples in the training set.
    pub indices: Vec<usize>,
    pub data: LabeledDataset,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn distinct_labels(&self) -> usize {
        self.data.label_counts().iter().filter(|&&c| c > 0).count()
    }
}
