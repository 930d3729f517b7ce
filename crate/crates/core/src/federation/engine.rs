use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, StrategyKind};
use crate::aggregation::{merge, ClientUpdate};
use crate::data::{partition, ClientShard, DatasetSplits, LabeledDataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, message_bits, to_mbit, Checkpoint, RoundRecord, TransmissionLedger};
use crate::nn::{
    client_opt, Architecture, Batch, BatchObjective, ClientOutcome, ClientTask, LocalTraining,
    ParamVector, PurgeDirective,
};
use crate::rng;
use crate::sparsity::{
    grasp_mask, magnitude_purge, prunefl_ratio, prunefl_readjust, snip_mask, BinaryMask,
};

const INIT_BATCH_SIZE: usize = 32;

/// Participants of round `round`: `round(ratio * N)` distinct clients,
/// ascending. Full participation skips the draw.
pub fn sample_participants(num_clients: usize, ratio: f64, round: usize, seed: u64) -> Vec<usize> {
    let m = ((ratio * num_clients as f64).round() as usize).clamp(1, num_clients.max(1));
    if m >= num_clients {
        return (0..num_clients).collect();
    }
    let mut rng = rng::stream(seed, &[rng::SAMPLE, round as u64]);
    let mut picked = rand::seq::index::sample(&mut rng, num_clients, m).into_vec();
    picked.sort_unstable();
    picked
}

/// Resolved description of a run, written before the first round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub layer_dims: Vec<usize>,
    pub param_count: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub shard_sizes: Vec<usize>,
    /// Client whose data chose the initial mask, for SNIP / GraSP / PruneFL.
    pub init_client: Option<usize>,
    pub initial_nnz: usize,
    pub accounting: String,
    pub version: String,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub records: Vec<RoundRecord>,
    pub checkpoint: Checkpoint,
}

pub struct Federation {
    config: ExperimentConfig,
    arch: Architecture,
    shards: Vec<ClientShard>,
    test: LabeledDataset,
    params: ParamVector,
    mask: BinaryMask,
    /// Mask the clients last received; starts as the implicit all-ones mask.
    broadcast_mask: BinaryMask,
    round: usize,
    ledger: TransmissionLedger,
    manifest: RunManifest,
}

impl Federation {
    /// Validate the config, partition the training set, initialize the model
    /// and, for pruning-at-initialization strategies, the mask.
    pub fn new(config: ExperimentConfig, splits: DatasetSplits) -> Result<Self> {
        config.validate()?;
        let DatasetSplits { train, test } = splits;
        if train.num_features() != test.num_features() {
            return Err(Error::config(format!(
                "train has {} features but test has {}",
                train.num_features(),
                test.num_features()
            )));
        }
        let classes = train.num_classes().max(test.num_classes());
        let mut dims = vec![train.num_features()];
        dims.extend_from_slice(&config.hidden_layers);
        dims.push(classes);
        let arch = Architecture::new(dims)?;
        let spec = PartitionSpec {
            num_clients: config.num_clients,
            scheme: config.partition.scheme,
            classes_per_client: config.partition.classes_per_client,
            seed: config.seed,
        };
        let shards = partition(&train, &spec)?;
        if let Some(s) = shards.iter().find(|s| s.is_empty()) {
            return Err(Error::config(format!("client {} received no examples", s.client_id)));
        }

        let p = arch.param_count();
        let params = arch.init_params(&mut rng::stream(config.seed, &[rng::INIT]));
        let mut fed = Federation {
            manifest: RunManifest {
                config: config.clone(),
                layer_dims: arch.layer_dims().to_vec(),
                param_count: p,
                num_train: train.len(),
                num_test: test.len(),
                shard_sizes: shards.iter().map(ClientShard::len).collect(),
                init_client: None,
                initial_nnz: p,
                accounting: accounting_note(&config),
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config,
            arch,
            shards,
            test,
            params,
            mask: BinaryMask::ones(p),
            broadcast_mask: BinaryMask::ones(p),
            round: 0,
            ledger: TransmissionLedger::default(),
        };
        if fed.config.strategy.kind.prunes_at_init() {
            fed.initialize_mask()?;
        }
        Ok(fed)
    }

    /// Load the configured dataset (paths relative to `base`) and build.
    pub fn from_config(config: ExperimentConfig, base: &std::path::Path) -> Result<Self> {
        let splits = config.dataset.load(base, config.seed)?;
        Self::new(config, splits)
    }

    fn initialize_mask(&mut self) -> Result<()> {
        let n = self.shards.len();
        let client = rng::stream(self.config.seed, &[rng::INIT_CLIENT]).gen_range(0..n);
        self.manifest.init_client = Some(client);
        let shard = &self.shards[client].data;
        let strategy = &self.config.strategy;
        let mask = match strategy.kind {
            StrategyKind::Snip | StrategyKind::Grasp => {
                let mut order: Vec<usize> = (0..shard.len()).collect();
                order.shuffle(&mut rng::stream(self.config.seed, &[rng::INIT_BATCH]));
                order.truncate(INIT_BATCH_SIZE);
                let sample = shard.subset(&order);
                let batch = Batch::new(sample.features(), sample.labels(), sample.num_features());
                let objective = BatchObjective::new(&self.arch, batch)?;
                if strategy.kind == StrategyKind::Snip {
                    snip_mask(&objective, &self.params, strategy.keep_ratio)
                } else {
                    grasp_mask(&objective, &self.params, strategy.keep_ratio)
                }
            }
            StrategyKind::PruneFl => {
                // Each reconfiguration trains one epoch on a scratch copy;
                // only the resulting mask is kept.
                let training = LocalTraining {
                    epochs: 1,
                    batch_size: self.config.batch_size,
                    optimizer: strategy.optimizer(self.config.learning_rate),
                };
                let ratio = prunefl_ratio(strategy.prunefl.s, 0);
                let mut scratch = self.params.to_vec();
                let mut mask = BinaryMask::ones(self.arch.param_count());
                for r in 0..strategy.prunefl.initial_reconfigurations {
                    let task = ClientTask {
                        arch: &self.arch,
                        global_params: &scratch,
                        global_mask: &mask,
                        shard,
                        training: &training,
                        purge: None,
                        track_gradients: true,
                    };
                    let mut rng = rng::stream(self.config.seed, &[rng::INIT_CLIENT, r as u64]);
                    let out = client_opt(&task, &mut rng)?;
                    scratch = out.params.into_inner();
                    let scores = out.mean_abs_gradient.expect("gradients were tracked");
                    mask = prunefl_readjust(&mut scratch, &mask, &scores, ratio);
                }
                mask
            }
            _ => return Ok(()),
        };
        mask.apply(&mut self.params);
        self.manifest.initial_nnz = mask.nnz();
        self.mask = mask;
        Ok(())
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn ledger(&self) -> &TransmissionLedger {
        &self.ledger
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            arch: self.arch.clone(),
            params: self.params.clone(),
            mask: self.mask.clone(),
        }
    }

    /// Broadcast, train the participants, merge, prune, evaluate.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let t = self.round + 1;
        let cfg = &self.config;
        let strategy = &cfg.strategy;
        let p = self.arch.param_count();
        let participants =
            sample_participants(cfg.num_clients, cfg.participation_ratio, t, cfg.seed);

        let send_mask = cfg.charge_mask_every_round || self.mask != self.broadcast_mask;
        let down = participants.len() as u64 * message_bits(self.mask.nnz(), p, send_mask);
        self.broadcast_mask = self.mask.clone();

        let training = LocalTraining {
            epochs: cfg.local_epochs,
            batch_size: cfg.batch_size,
            optimizer: strategy.optimizer(cfg.learning_rate),
        };
        let purge = strategy.purge_method().map(|method| PurgeDirective {
            schedule: strategy.schedule(),
            round: t,
            method,
            seed: cfg.seed,
        });
        let readjust =
            strategy.kind == StrategyKind::PruneFl && t.is_multiple_of(strategy.prunefl.readjust_every);
        let (arch, params, mask, shards, seed) =
            (&self.arch, &self.params, &self.mask, &self.shards, cfg.seed);
        let outcomes: Vec<(usize, ClientOutcome)> = participants
            .par_iter()
            .map(|&k| {
                let task = ClientTask {
                    arch,
                    global_params: params,
                    global_mask: mask,
                    shard: &shards[k].data,
                    training: &training,
                    purge,
                    track_gradients: readjust,
                };
                let mut rng = rng::stream(seed, &[rng::CLIENT_TRAIN, t as u64, k as u64]);
                client_opt(&task, &mut rng).map(|o| (k, o))
            })
            .collect::<Result<_>>()?;

        let local = strategy.kind.is_local();
        let up: u64 = outcomes
            .iter()
            .map(|(_, o)| message_bits(o.mask.nnz(), p, local))
            .sum();

        let mut scores = readjust.then(|| vec![0.0; p]);
        let mut updates = Vec::with_capacity(outcomes.len());
        for (k, o) in outcomes {
            if let (Some(acc), Some(g)) = (scores.as_mut(), o.mean_abs_gradient.as_ref()) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            updates.push(ClientUpdate {
                client_id: k,
                params: o.params,
                mask: o.mask,
                num_examples: shards[k].len(),
            });
        }
        let (mut new_params, mut new_mask) = merge(strategy.merge_rule(), &updates)?;
        drop(updates);

        if strategy.kind == StrategyKind::FedSparsifyGlobal && strategy.schedule().fires(t) {
            magnitude_purge(&mut new_params, &mut new_mask, strategy.fraction);
        }
        if let Some(mut acc) = scores {
            let n = participants.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            let ratio = prunefl_ratio(strategy.prunefl.s, t);
            new_mask = prunefl_readjust(&mut new_params, &new_mask, &acc, ratio);
        }
        new_mask.apply(&mut new_params);
        self.params = new_params;
        self.mask = new_mask;
        self.round = t;
        self.ledger.record_round(up, down);

        let eval = evaluate(&self.arch, &self.params, &self.mask, &self.test)?;
        let nnz = self.mask.nnz();
        Ok(RoundRecord {
            round: t,
            accuracy: eval.accuracy,
            loss: eval.loss,
            nnz,
            sparsity: 1.0 - nnz as f64 / p as f64,
            mbit_up: to_mbit(self.ledger.up_bits),
            mbit_down: to_mbit(self.ledger.down_bits),
        })
    }

    /// Run the remaining configured rounds, calling `on_round` after each.
    pub fn run_with<F: FnMut(&RoundRecord) -> Result<()>>(
        &mut self,
        mut on_round: F,
    ) -> Result<Vec<RoundRecord>> {
        let mut records = Vec::with_capacity(self.config.rounds.saturating_sub(self.round));
        while self.round < self.config.rounds {
            let record = self.run_round()?;
            on_round(&record)?;
            records.push(record);
        }
        Ok(records)
    }

    pub fn run(&mut self) -> Result<Vec<RoundRecord>> {
        self.run_with(|_| Ok(()))
    }
}

fn accounting_note(config: &ExperimentConfig) -> String {
    let up = if config.strategy.kind.is_local() {
        "uplink: 32 bits per nonzero weight plus a P-bit mask"
    } else {
        "uplink: 32 bits per nonzero weight"
    };
    let down = if config.charge_mask_every_round {
        "downlink: 32 bits per nonzero weight plus a P-bit mask every round"
    } else {
        "downlink: 32 bits per nonzero weight plus a P-bit mask when the mask changed since the last broadcast (initial mask is all ones)"
    };
    format!("{up}; {down}; per participating client")
}

/// Build a federation from in-memory splits and run every round.
pub fn run_experiment(config: ExperimentConfig, splits: DatasetSplits) -> Result<ExperimentOutcome> {
    let mut fed = Federation::new(config, splits)?;
    let records = fed.run()?;
    Ok(ExperimentOutcome {
        manifest: fed.manifest.clone(),
        records,
        checkpoint: fed.checkpoint(),
    })
}
