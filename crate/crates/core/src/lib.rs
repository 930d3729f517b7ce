//! Federated training with progressive magnitude pruning.
//!
//! The crate is a deterministic, single-process simulator: a dense MLP kernel
//! ([`nn`]), binary masks and pruning operators ([`sparsity`]), merge rules
//! ([`aggregation`]), the round engine ([`federation`]), dataset loading and
//! partitioning ([`data`]) and per-round reporting ([`metrics`]).
//!
//! Every random choice is drawn from a ChaCha stream derived from the
//! experiment seed and a set of tags (round, client, purpose), so two runs of
//! the same configuration are bit-identical regardless of thread scheduling.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod sparsity;

pub use aggregation::{majority_vote_merge, merge, weighted_average, ClientUpdate, MergeRule};
pub use data::{ClientShard, LabeledDataset, PartitionScheme, PartitionSpec};
pub use error::{Error, Result};
pub use federation::{
    ExperimentConfig, ExperimentOutcome, Federation, RunManifest, StrategyConfig, StrategyKind,
};
pub use metrics::{RoundRecord, TransmissionLedger};
pub use nn::{Architecture, MlpModel, OptimizerConfig, OptimizerKind, ParamVector};
pub use sparsity::{BinaryMask, PruneSchedule};
