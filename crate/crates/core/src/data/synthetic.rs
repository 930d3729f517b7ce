use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DatasetSplits, LabeledDataset};
use crate::rng;

/// Gaussian class clusters. Class centres are drawn from `N(0, 1)` per
/// feature; each example adds `N(0, spread^2)` noise to its centre, so a
/// small `spread` gives well-separated classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_examples: usize,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(default = "default_spread")]
    pub spread: f64,
    pub seed: u64,
}

fn default_spread() -> f64 {
    0.2
}

impl SyntheticSpec {
    pub fn new(num_examples: usize, num_features: usize, num_classes: usize, seed: u64) -> Self {
        SyntheticSpec {
            num_examples,
            num_features,
            num_classes,
            spread: default_spread(),
            seed,
        }
    }
}

/// Generate `num_examples` balanced examples and split them 5:1 into
/// train and test.
pub fn synthetic_blobs(spec: &SyntheticSpec) -> DatasetSplits {
    let mut rng = rng::stream(spec.seed, &[rng::SYNTHETIC]);
    let classes = spec.num_classes.max(1);
    let d = spec.num_features;
    let centres: Vec<f64> = (0..classes * d).map(|_| rng.sample(StandardNormal)).collect();
    let mut labels: Vec<u32> = (0..spec.num_examples).map(|i| (i % classes) as u32).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(spec.num_examples * d);
    for &y in &labels {
        let c = &centres[y as usize * d..(y as usize + 1) * d];
        for &mu in c {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mu + spec.spread * z);
        }
    }
    let train_len = spec.num_examples * 5 / 6;
    let (train_x, test_x) = features.split_at(train_len * d);
    let (train_y, test_y) = labels.split_at(train_len);
    DatasetSplits {
        train: LabeledDataset::new(train_x.to_vec(), train_y.to_vec(), d, classes)
            .expect("generated shapes are consistent"),
        test: LabeledDataset::new(test_x.to_vec(), test_y.to_vec(), d, classes)
            .expect("generated shapes are consistent"),
    }
}
