use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::MergeRule;
use crate::data::{self, DatasetSplits, PartitionScheme, SyntheticSpec};
use crate::error::{Error, Result};
use crate::nn::{OptimizerConfig, OptimizerKind, PurgeMethod};
use crate::sparsity::PruneSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyKind {
    /// FedAvg with vanilla SGD, no pruning.
    #[serde(rename = "fedavg")]
    FedAvgDense,
    /// FedProx local objective, no pruning.
    #[serde(rename = "fedprox")]
    FedProxDense,
    /// FedAvg with MomentumSGD (MFL), no pruning.
    #[serde(rename = "momentum")]
    MomentumDense,
    /// Server-side magnitude purge after merging.
    #[serde(rename = "fedsparsify_global")]
    FedSparsifyGlobal,
    /// Client-side magnitude purge after local training.
    #[serde(rename = "fedsparsify_local")]
    FedSparsifyLocal,
    /// Client-side random purge after local training.
    #[serde(rename = "random_local")]
    RandomLocal,
    /// Fixed mask from connection sensitivity at initialization.
    #[serde(rename = "snip")]
    Snip,
    /// Fixed mask from gradient flow at initialization.
    #[serde(rename = "grasp")]
    Grasp,
    /// Periodic mask readjustment with regrowth.
    #[serde(rename = "prunefl")]
    PruneFl,
}

impl StrategyKind {
    /// Clients purge and upload their own masks.
    pub fn is_local(self) -> bool {
        matches!(self, StrategyKind::FedSparsifyLocal | StrategyKind::RandomLocal)
    }

    pub fn prunes_at_init(self) -> bool {
        matches!(self, StrategyKind::Snip | StrategyKind::Grasp | StrategyKind::PruneFl)
    }

    pub fn default_merge_rule(self) -> MergeRule {
        if self.is_local() {
            MergeRule::MajorityVote
        } else {
            MergeRule::WeightedAverage
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneFlConfig {
    /// Sparsity of mask readjustments at round 0; decays as `s * 0.5^(t/1000)`.
    pub s: f64,
    pub readjust_every: usize,
    pub initial_reconfigurations: usize,
}

impl Default for PruneFlConfig {
    fn default() -> Self {
        PruneFlConfig {
            s: 0.3,
            readjust_every: 50,
            initial_reconfigurations: 5,
        }
    }
}

fn default_fraction() -> f64 {
    0.02
}
fn default_frequency() -> usize {
    2
}
fn default_keep_ratio() -> f64 {
    0.2
}
fn default_mu() -> f64 {
    0.001
}
fn default_momentum() -> f64 {
    0.75
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Fraction of active weights removed per purge.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Rounds between purges.
    #[serde(default = "default_frequency")]
    pub frequency: usize,
    /// Fraction of weights kept by SNIP / GraSP.
    #[serde(default = "default_keep_ratio")]
    pub keep_ratio: f64,
    #[serde(default)]
    pub prunefl: PruneFlConfig,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Overrides the strategy's merge rule; only the default is accepted.
    #[serde(default)]
    pub merge_rule: Option<MergeRule>,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            fraction: default_fraction(),
            frequency: default_frequency(),
            keep_ratio: default_keep_ratio(),
            prunefl: PruneFlConfig::default(),
            mu: default_mu(),
            momentum: default_momentum(),
            merge_rule: None,
        }
    }

    pub fn schedule(&self) -> PruneSchedule {
        PruneSchedule::new(self.fraction, self.frequency)
    }

    pub fn merge_rule(&self) -> MergeRule {
        self.merge_rule.unwrap_or(self.kind.default_merge_rule())
    }

    pub fn purge_method(&self) -> Option<PurgeMethod> {
        match self.kind {
            StrategyKind::FedSparsifyLocal => Some(PurgeMethod::Magnitude),
            StrategyKind::RandomLocal => Some(PurgeMethod::Random),
            _ => None,
        }
    }

    pub fn optimizer(&self, learning_rate: f64) -> OptimizerConfig {
        let kind = match self.kind {
            StrategyKind::FedProxDense => OptimizerKind::FedProx { mu: self.mu },
            StrategyKind::MomentumDense => OptimizerKind::Momentum {
                momentum: self.momentum,
            },
            _ => OptimizerKind::Sgd,
        };
        OptimizerConfig {
            kind,
            learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.schedule().is_valid() {
            return Err(Error::config(format!(
                "purge fraction must be in [0, 1) and frequency >= 1, got {} and {}",
                self.fraction, self.frequency
            )));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::config(format!(
                "keep_ratio must be in (0, 1], got {}",
                self.keep_ratio
            )));
        }
        let p = &self.prunefl;
        if !(p.s > 0.0 && p.s <= 1.0) || p.readjust_every == 0 {
            return Err(Error::config(
                "prunefl.s must be in (0, 1] and readjust_every >= 1",
            ));
        }
        let rule = self.merge_rule();
        if rule != self.kind.default_merge_rule() {
            return Err(Error::config(format!(
                "strategy {:?} requires the {:?} merge rule",
                self.kind,
                self.kind.default_merge_rule()
            )));
        }
        Ok(())
    }
}

/// Where the examples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Directory holding `train-*` / `t10k-*` IDX files (optionally `.gz`).
    FashionMnist { dir: PathBuf },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// Flat binary files in the FDS format.
    Fds { train: PathBuf, test: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Seeded random subset of the training set.
    #[serde(default)]
    pub train_subsample: Option<usize>,
    #[serde(default)]
    pub test_subsample: Option<usize>,
}

impl DatasetConfig {
    pub fn new(source: DataSource) -> Self {
        DatasetConfig {
            source,
            train_subsample: None,
            test_subsample: None,
        }
    }

    /// Load both splits, resolving relative paths against `base`.
    pub fn load(&self, base: &Path, seed: u64) -> Result<DatasetSplits> {
        let at = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        let mut splits = match &self.source {
            DataSource::FashionMnist { dir } => data::load_fashion_mnist(&at(dir))?,
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = data::load_idx(&at(train_images), &at(train_labels))?;
                let test = data::load_idx(&at(test_images), &at(test_labels))?;
                let classes = train.num_classes().max(test.num_classes());
                DatasetSplits {
                    train: train.with_num_classes(classes)?,
                    test: test.with_num_classes(classes)?,
                }
            }
            DataSource::Fds { train, test } => DatasetSplits {
                train: data::read_fds(&at(train))?,
                test: data::read_fds(&at(test))?,
            },
            DataSource::Synthetic(spec) => data::synthetic_blobs(spec),
        };
        if let Some(n) = self.train_subsample {
            splits.train = splits.train.subsample(n, seed)?;
        }
        if let Some(n) = self.test_subsample {
            splits.test = splits.test.subsample(n, seed ^ 1)?;
        }
        Ok(splits)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub scheme: PartitionScheme,
    #[serde(default)]
    pub classes_per_client: Option<usize>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            scheme: PartitionScheme::Iid,
            classes_per_client: None,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_one() -> f64 {
    1.0
}

/// Everything one experiment needs; loadable from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    /// Hidden layer widths; input and output widths come from the data.
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    pub strategy: StrategyConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub rounds: usize,
    pub num_clients: usize,
    #[serde(default = "default_one")]
    pub participation_ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Charge the mask on every downlink instead of only when it changed.
    #[serde(default)]
    pub charge_mask_every_round: bool,
}

impl ExperimentConfig {
    /// The FashionMNIST baseline: 10 IID clients, full participation,
    /// lr 0.02, batch 32, 4 local epochs, 200 rounds, seed 1990.
    pub fn fashion_mnist(dir: impl Into<PathBuf>, kind: StrategyKind) -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::new(DataSource::FashionMnist { dir: dir.into() }),
            partition: PartitionConfig::default(),
            hidden_layers: default_hidden(),
            strategy: StrategyConfig::new(kind),
            learning_rate: 0.02,
            batch_size: 32,
            local_epochs: 4,
            rounds: 200,
            num_clients: 10,
            participation_ratio: 1.0,
            seed: 1990,
            output_dir: None,
            charge_mask_every_round: false,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("invalid TOML config: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid JSON config: {e}")))
    }

    /// Parse by extension: `.json` is JSON, anything else TOML.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn participants_per_round(&self) -> usize {
        (self.participation_ratio * self.num_clients as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.strategy.optimizer(self.learning_rate).validate()?;
        if self.num_clients == 0 {
            return Err(Error::config("num_clients must be at least 1"));
        }
        if !(self.participation_ratio > 0.0 && self.participation_ratio <= 1.0) {
            return Err(Error::config(format!(
                "participation_ratio must be in (0, 1], got {}",
                self.participation_ratio
            )));
        }
        if (self.participation_ratio * self.num_clients as f64).floor() < 1.0 {
            return Err(Error::config("participation selects no clients"));
        }
        if self.batch_size == 0 || self.local_epochs == 0 {
            return Err(Error::config("batch_size and local_epochs must be at least 1"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.partition.scheme == PartitionScheme::NonIid && self.partition.classes_per_client.is_none() {
            return Err(Error::config("non-IID partitioning needs classes_per_client"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            learning_rate = 0.02
            batch_size = 32
            local_epochs = 4
            rounds = 200
            num_clients = 10
            seed = 1990

            [dataset]
            kind = "fashion_mnist"
            dir = "data/fashion-mnist"
            train_subsample = 6000

            [partition]
            scheme = "noniid"
            classes_per_client = 2

            [strategy]
            kind = "fedsparsify_global"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.strategy.kind, StrategyKind::FedSparsifyGlobal);
        assert_eq!(cfg.strategy.schedule(), PruneSchedule::new(0.02, 2));
        assert_eq!(cfg.hidden_layers, vec![128, 128]);
        assert_eq!(cfg.participation_ratio, 1.0);
        assert_eq!(cfg.dataset.train_subsample, Some(6000));
        assert_eq!(cfg.partition.scheme, PartitionScheme::NonIid);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::fashion_mnist("d", StrategyKind::Snip);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn merge_rule_constraints() {
        let mut s = StrategyConfig::new(StrategyKind::FedSparsifyLocal);
        assert_eq!(s.merge_rule(), MergeRule::MajorityVote);
        s.merge_rule = Some(MergeRule::WeightedAverage);
        assert!(s.validate().is_err());
        let mut g = StrategyConfig::new(StrategyKind::FedSparsifyGlobal);
        g.merge_rule = Some(MergeRule::MajorityVote);
        assert!(g.validate().is_err());
        assert_eq!(StrategyConfig::new(StrategyKind::RandomLocal).merge_rule(), MergeRule::MajorityVote);
    }

    #[test]
    fn rejects_bad_values() {
        let base = ExperimentConfig::fashion_mnist("d", StrategyKind::FedAvgDense);
        let mut c = base.clone();
        c.participation_ratio = 0.01;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.strategy.fraction = 1.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.strategy.kind = StrategyKind::Snip;
        c.strategy.keep_ratio = 0.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.learning_rate = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn optimizer_per_strategy() {
        let s = StrategyConfig::new(StrategyKind::FedProxDense);
        assert_eq!(s.optimizer(0.02).kind, OptimizerKind::FedProx { mu: 0.001 });
        let s = StrategyConfig::new(StrategyKind::MomentumDense);
        assert_eq!(s.optimizer(0.005).kind, OptimizerKind::Momentum { momentum: 0.75 });
        let s = StrategyConfig::new(StrategyKind::FedSparsifyLocal);
        assert_eq!(s.optimizer(0.02).kind, OptimizerKind::Sgd);
    }
}
