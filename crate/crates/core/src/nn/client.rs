//! One client's local round: masked mini-batch training, then an optional
//! local purge.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_gradient, Architecture, Batch, ParamVector, Scratch};
use super::optim::{OptimizerConfig, OptimizerState};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::sparsity::{magnitude_purge, random_purge, BinaryMask, PruneSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurgeMethod {
    Magnitude,
    Random,
}

/// Client-side purge request for round `round`; fires when the schedule does.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PurgeDirective {
    pub schedule: PruneSchedule,
    pub round: usize,
    pub method: PurgeMethod,
    /// Keys the random purge. Every client shares the stream for a round, so
    /// clients holding the same mask drop the same coordinates.
    pub seed: u64,
}

pub struct ClientTask<'a> {
    pub arch: &'a Architecture,
    pub global_params: &'a [f64],
    pub global_mask: &'a BinaryMask,
    pub shard: &'a LabeledDataset,
    pub training: &'a LocalTraining,
    pub purge: Option<PurgeDirective>,
    /// Accumulate mean `|g|` over all local steps (unmasked gradient).
    pub track_gradients: bool,
}

#[derive(Clone, Debug)]
pub struct ClientOutcome {
    pub params: ParamVector,
    pub mask: BinaryMask,
    pub steps: usize,
    /// Mean batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub purged: bool,
    pub mean_abs_gradient: Option<Vec<f64>>,
}

/// Train a copy of the global model on `task.shard` for `epochs` passes of
/// shuffled mini-batches (`ceil(n / batch_size)` per epoch, last one
/// partial). The global mask is applied before the first step and after
/// every step, so pruned coordinates stay exactly zero.
pub fn client_opt<R: Rng + ?Sized>(task: &ClientTask<'_>, rng: &mut R) -> Result<ClientOutcome> {
    let ClientTask {
        arch,
        global_params,
        global_mask,
        shard,
        training,
        purge,
        track_gradients,
    } = *task;
    let p = arch.param_count();
    if global_params.len() != p || global_mask.len() != p {
        return Err(Error::config(format!(
            "client received {} parameters and a {}-bit mask for a {p}-parameter model",
            global_params.len(),
            global_mask.len()
        )));
    }
    if shard.is_empty() {
        return Err(Error::config("client shard is empty"));
    }
    if shard.num_features() != arch.input_dim() {
        return Err(Error::config(format!(
            "shard has {} features, model expects {}",
            shard.num_features(),
            arch.input_dim()
        )));
    }
    if shard.num_classes() > arch.output_dim() {
        return Err(Error::config(format!(
            "shard has {} classes, model outputs {}",
            shard.num_classes(),
            arch.output_dim()
        )));
    }
    if training.epochs == 0 || training.batch_size == 0 {
        return Err(Error::config("epochs and batch size must be at least 1"));
    }

    let mut params = ParamVector::from(global_params.to_vec());
    global_mask.apply(&mut params);
    let mut optimizer = OptimizerState::new(training.optimizer, p, Some(global_params))?;
    let mut grad = vec![0.0; p];
    let mut grad_sum = track_gradients.then(|| vec![0.0; p]);
    let mut scratch = Scratch::default();
    let width = shard.num_features();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut xbuf = Vec::with_capacity(training.batch_size * width);
    let mut ybuf = Vec::with_capacity(training.batch_size);
    let mut steps = 0;
    let mut epoch_losses = Vec::with_capacity(training.epochs);

    for _ in 0..training.epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(training.batch_size) {
            xbuf.clear();
            ybuf.clear();
            for &i in chunk {
                xbuf.extend_from_slice(shard.row(i));
                ybuf.push(shard.labels()[i]);
            }
            let batch = Batch::new(&xbuf, &ybuf, width);
            loss_sum += loss_and_gradient(arch, &params, &batch, &mut grad, &mut scratch);
            if let Some(acc) = grad_sum.as_mut() {
                for (a, g) in acc.iter_mut().zip(&grad) {
                    *a += g.abs();
                }
            }
            optimizer.step(&mut params, &grad)?;
            global_mask.apply(&mut params);
            steps += 1;
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }

    let mut mask = global_mask.clone();
    let mut purged = false;
    if let Some(directive) = purge {
        if directive.schedule.fires(directive.round) {
            purged = true;
            match directive.method {
                PurgeMethod::Magnitude => {
                    magnitude_purge(&mut params, &mut mask, directive.schedule.fraction);
                }
                PurgeMethod::Random => {
                    let mut purge_rng =
                        crate::rng::stream(directive.seed, &[crate::rng::CLIENT_PURGE, directive.round as u64]);
                    random_purge(&mut params, &mut mask, directive.schedule.fraction, &mut purge_rng);
                }
            }
        }
    }

    let mean_abs_gradient = grad_sum.map(|mut acc| {
        let inv = 1.0 / steps as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    });
    Ok(ClientOutcome {
        params,
        mask,
        steps,
        epoch_losses,
        purged,
        mean_abs_gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_blobs, SyntheticSpec};
    use crate::nn::MlpModel;
    use crate::rng;

    fn setup(n: usize) -> (Architecture, LabeledDataset, ParamVector) {
        let data = synthetic_blobs(&SyntheticSpec::new(n, 6, 3, 2)).train;
        let arch = Architecture::new(vec![6, 5, 3]).unwrap();
        let params = MlpModel::init(arch.clone(), &mut rng::stream(2, &[rng::INIT])).params;
        (arch, data, params)
    }

    fn training(epochs: usize, batch_size: usize) -> LocalTraining {
        LocalTraining {
            epochs,
            batch_size,
            optimizer: OptimizerConfig::sgd(0.05),
        }
    }

    #[test]
    fn step_count_uses_ceiling() {
        let (arch, data, params) = setup(120);
        let mask = BinaryMask::ones(params.len());
        let tr = training(4, 32);
        let task = ClientTask {
            arch: &arch,
            global_params: &params,
            global_mask: &mask,
            shard: &data,
            training: &tr,
            purge: None,
            track_gradients: false,
        };
        let out = client_opt(&task, &mut rng::stream(1, &[])).unwrap();
        // 100 training examples, batches of 32 -> 4 per epoch.
        assert_eq!(data.len(), 100);
        assert_eq!(out.steps, 4 * 4);
        assert!(out.mask.is_all_ones());
        assert!(!out.purged);
    }

    #[test]
    fn masked_coordinates_stay_exactly_zero() {
        let (arch, data, params) = setup(120);
        let mut mask = BinaryMask::ones(params.len());
        for i in (0..params.len()).step_by(3) {
            mask.clear(i);
        }
        let tr = training(2, 8);
        let task = ClientTask {
            arch: &arch,
            global_params: &params,
            global_mask: &mask,
            shard: &data,
            training: &tr,
            purge: None,
            track_gradients: true,
        };
        let out = client_opt(&task, &mut rng::stream(1, &[])).unwrap();
        for i in (0..params.len()).step_by(3) {
            assert_eq!(out.params[i].to_bits(), 0.0f64.to_bits());
        }
        assert_eq!(out.mask, mask);
        assert!(out.mean_abs_gradient.unwrap().iter().any(|g| *g > 0.0));
    }

    #[test]
    fn purge_fires_on_schedule_only() {
        let (arch, data, params) = setup(120);
        let mask = BinaryMask::ones(params.len());
        let tr = training(1, 16);
        let run = |round| {
            let task = ClientTask {
                arch: &arch,
                global_params: &params,
                global_mask: &mask,
                shard: &data,
                training: &tr,
                purge: Some(PurgeDirective {
                    schedule: PruneSchedule::new(0.2, 2),
                    round,
                    method: PurgeMethod::Magnitude,
                    seed: 2,
                }),
                track_gradients: false,
            };
            client_opt(&task, &mut rng::stream(1, &[])).unwrap()
        };
        let off = run(3);
        assert!(!off.purged);
        assert!(off.mask.is_all_ones());
        let on = run(4);
        assert!(on.purged);
        let p = params.len();
        assert_eq!(on.mask.count_ones(), p - (0.2 * p as f64).floor() as usize);
        assert!(on.mask.iter_ones().count() <= on.params.len());
    }

    #[test]
    fn deterministic_given_stream() {
        let (arch, data, params) = setup(120);
        let mask = BinaryMask::ones(params.len());
        let tr = training(2, 10);
        let task = ClientTask {
            arch: &arch,
            global_params: &params,
            global_mask: &mask,
            shard: &data,
            training: &tr,
            purge: None,
            track_gradients: false,
        };
        let a = client_opt(&task, &mut rng::stream(9, &[])).unwrap();
        let b = client_opt(&task, &mut rng::stream(9, &[])).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn empty_shard_is_a_config_error() {
        let (arch, _, params) = setup(120);
        let empty = LabeledDataset::new(vec![], vec![], 6, 3).unwrap();
        let mask = BinaryMask::ones(params.len());
        let tr = training(1, 4);
        let task = ClientTask {
            arch: &arch,
            global_params: &params,
            global_mask: &mask,
            shard: &empty,
            training: &tr,
            purge: None,
            track_gradients: false,
        };
        assert!(matches!(client_opt(&task, &mut rng::stream(0, &[])), Err(Error::Config(_))));
    }
}
