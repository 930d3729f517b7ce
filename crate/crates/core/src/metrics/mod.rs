//! Evaluation, transmission accounting and on-disk records.

mod checkpoint;
mod records;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use records::{format_sig9, parse_records_csv, records_csv, write_records, write_records_json, CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::model_logits;
use crate::nn::{Architecture, Scratch};
use crate::sparsity::BinaryMask;

/// Bits per transmitted weight.
pub const WEIGHT_BITS: u64 = 32;

/// Message size for a model with `nnz` transmitted weights out of `total`,
/// plus a one-bit-per-parameter mask when `include_mask` is set.
pub fn message_bits(nnz: usize, total: usize, include_mask: bool) -> u64 {
    assert!(nnz <= total, "nnz {nnz} exceeds parameter count {total}");
    WEIGHT_BITS * nnz as u64 + if include_mask { total as u64 } else { 0 }
}

/// Decimal megabits.
pub fn to_mbit(bits: u64) -> f64 {
    bits as f64 / 1e6
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmissionLedger {
    pub up_bits: u64,
    pub down_bits: u64,
    /// `(uplink, downlink)` bits charged in each round.
    pub per_round: Vec<(u64, u64)>,
}

impl TransmissionLedger {
    pub fn record_round(&mut self, up: u64, down: u64) {
        self.up_bits += up;
        self.down_bits += down;
        self.per_round.push((up, down));
    }

    pub fn mbit_up(&self) -> f64 {
        to_mbit(self.up_bits)
    }

    pub fn mbit_down(&self) -> f64 {
        to_mbit(self.down_bits)
    }
}

/// Metrics reported after each federation round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub nnz: usize,
    pub sparsity: f64,
    /// Cumulative uplink megabits.
    pub mbit_up: f64,
    /// Cumulative downlink megabits.
    pub mbit_down: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

const EVAL_CHUNK: usize = 1000;

/// Test accuracy (argmax, lowest class index wins ties) and mean
/// cross-entropy of the masked model.
pub fn evaluate(
    arch: &Architecture,
    params: &[f64],
    mask: &BinaryMask,
    test: &LabeledDataset,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::config("cannot evaluate on an empty test set"));
    }
    if params.len() != arch.param_count() || mask.len() != params.len() {
        return Err(Error::config("evaluation parameters do not match the architecture"));
    }
    if test.num_features() != arch.input_dim() || test.num_classes() > arch.output_dim() {
        return Err(Error::config("test set shape does not match the architecture"));
    }
    let mut masked = params.to_vec();
    mask.apply(&mut masked);
    let classes = arch.output_dim();
    let mut scratch = Scratch::default();
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut start = 0;
    while start < test.len() {
        let end = (start + EVAL_CHUNK).min(test.len());
        let batch = test.slice_batch(start..end);
        let logits = model_logits(arch, &masked, batch.features, batch.len(), &mut scratch);
        for (row, &y) in logits.chunks(classes).zip(batch.labels) {
            let mut best = 0;
            for c in 1..classes {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best == y as usize {
                correct += 1;
            }
            let max = row[best];
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y as usize];
        }
        start = end;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        loss: loss / test.len() as f64,
    })
}
