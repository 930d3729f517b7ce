//! The federation round engine.

mod config;
mod engine;

pub use config::{
    DataSource, DatasetConfig, ExperimentConfig, PartitionConfig, PruneFlConfig, StrategyConfig,
    StrategyKind,
};
pub use engine::{run_experiment, sample_participants, ExperimentOutcome, Federation, RunManifest};
