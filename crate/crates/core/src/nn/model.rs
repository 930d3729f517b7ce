use std::ops::{Deref, DerefMut, Range};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, Op};
use crate::error::{Error, Result};
use crate::sparsity::Objective;

/// Flat vector of every trainable parameter.
///
/// Layout, layer by layer: the `fan_in x fan_out` weight matrix row-major
/// (entry `(i, j)` connects input `i` to output `j`), then the `fan_out`
/// biases.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Count of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Parameter ranges of one dense layer inside a [`ParamVector`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Range<usize>,
    pub biases: Range<usize>,
}

/// Layer widths `[input, hidden.., output]`; ReLU between dense layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layer_dims: Vec<usize>,
}

impl Architecture {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config("an architecture needs at least input and output widths"));
        }
        if layer_dims.contains(&0) {
            return Err(Error::config(format!(
                "layer widths must be positive, got {layer_dims:?}"
            )));
        }
        Ok(Architecture { layer_dims })
    }

    /// 784-128-128-10 with biases: 118,282 parameters.
    pub fn fashion_mnist() -> Self {
        Architecture {
            layer_dims: vec![784, 128, 128, 10],
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = offset..offset + fan_in * fan_out;
                let biases = weights.end..weights.end + fan_out;
                offset = biases.end;
                LayerLayout {
                    fan_in,
                    fan_out,
                    weights,
                    biases,
                }
            })
            .collect()
    }

    /// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`,
    /// biases zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut params = vec![0.0; self.param_count()];
        for layer in self.layers() {
            let limit = (6.0 / layer.fan_in as f64).sqrt();
            for w in &mut params[layer.weights] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        ParamVector(params)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, architecture {:?} needs {}",
                params.len(),
                self.layer_dims,
                self.param_count()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        if batch.num_features != self.input_dim() {
            return Err(Error::config(format!(
                "batch has {} features, model expects {}",
                batch.num_features,
                self.input_dim()
            )));
        }
        if batch.features.len() != batch.labels.len() * batch.num_features {
            return Err(Error::config("batch feature buffer does not match its label count"));
        }
        let classes = self.output_dim();
        if let Some(&bad) = batch.labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::config(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

/// Row-major feature block with one label per row.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [u32],
    pub num_features: usize,
}

impl<'a> Batch<'a> {
    pub fn new(features: &'a [f64], labels: &'a [u32], num_features: usize) -> Self {
        Batch {
            features,
            labels,
            num_features,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Reusable activation buffers; one per training thread.
#[derive(Default, Debug)]
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

/// Softmax each `classes`-wide row in place.
pub fn softmax_rows(values: &mut [f64], classes: usize) {
    for row in values.chunks_mut(classes) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Numerically stable log-sum-exp of one row.
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Forward pass through every layer; returns the logits buffer.
fn forward_into<'s>(
    arch: &Architecture,
    params: &[f64],
    features: &[f64],
    rows: usize,
    scratch: &'s mut Scratch,
) -> &'s [f64] {
    let layers = arch.layers();
    scratch.acts.resize_with(layers.len(), Vec::new);
    for (l, layer) in layers.iter().enumerate() {
        let (done, rest) = scratch.acts.split_at_mut(l);
        let input: &[f64] = if l == 0 { features } else { &done[l - 1] };
        let out = &mut rest[0];
        out.resize(rows * layer.fan_out, 0.0);
        let bias = &params[layer.biases.clone()];
        for row in out.chunks_mut(layer.fan_out) {
            row.copy_from_slice(bias);
        }
        gemm(
            rows,
            layer.fan_in,
            layer.fan_out,
            1.0,
            input,
            Op::N,
            &params[layer.weights.clone()],
            Op::N,
            1.0,
            out,
        );
        if l + 1 < layers.len() {
            for v in out.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    &scratch.acts[layers.len() - 1]
}

/// Mean cross-entropy of `batch` and its gradient written into `grad`.
pub(crate) fn loss_and_gradient(
    arch: &Architecture,
    params: &[f64],
    batch: &Batch<'_>,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> f64 {
    let rows = batch.len();
    let classes = arch.output_dim();
    let layers = arch.layers();
    forward_into(arch, params, batch.features, rows, scratch);

    // delta = (softmax - onehot) / rows
    let logits = &scratch.acts[layers.len() - 1];
    scratch.delta.clear();
    scratch.delta.extend_from_slice(logits);
    let mut loss = 0.0;
    let inv = 1.0 / rows as f64;
    for (r, row) in scratch.delta.chunks_mut(classes).enumerate() {
        let y = batch.labels[r] as usize;
        let lse = log_sum_exp(row);
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() * inv;
        }
        row[y] -= inv;
    }

    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let input: &[f64] = if l == 0 {
            batch.features
        } else {
            &scratch.acts[l - 1]
        };
        gemm(
            layer.fan_in,
            rows,
            layer.fan_out,
            1.0,
            input,
            Op::T,
            &scratch.delta,
            Op::N,
            0.0,
            &mut grad[layer.weights.clone()],
        );
        let gb = &mut grad[layer.biases.clone()];
        gb.fill(0.0);
        for row in scratch.delta.chunks(layer.fan_out) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        if l > 0 {
            scratch.delta_prev.resize(rows * layer.fan_in, 0.0);
            gemm(
                rows,
                layer.fan_out,
                layer.fan_in,
                1.0,
                &scratch.delta,
                Op::N,
                &params[layer.weights.clone()],
                Op::T,
                0.0,
                &mut scratch.delta_prev,
            );
            // ReLU derivative: active iff the post-activation is positive.
            for (d, a) in scratch.delta_prev.iter_mut().zip(&scratch.acts[l - 1]) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
        }
    }
    loss * inv
}

/// Logits for `rows` examples; buffer owned by `scratch`.
pub(crate) fn logits<'s>(
    arch: &Architecture,
    params: &[f64],
    features: &[f64],
    rows: usize,
    scratch: &'s mut Scratch,
) -> &'s [f64] {
    forward_into(arch, params, features, rows, scratch)
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `rows x classes`, row-major.
    pub logits: Vec<f64>,
    pub loss: f64,
}

impl ForwardOutput {
    pub fn probabilities(&self, classes: usize) -> Vec<f64> {
        let mut p = self.logits.clone();
        softmax_rows(&mut p, classes);
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub arch: Architecture,
    pub params: ParamVector,
}

impl MlpModel {
    pub fn new(arch: Architecture, params: ParamVector) -> Result<Self> {
        arch.check_params(&params)?;
        Ok(MlpModel { arch, params })
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let params = arch.init_params(rng);
        MlpModel { arch, params }
    }

    pub fn forward(&self, batch: &Batch<'_>) -> Result<ForwardOutput> {
        self.arch.check_params(&self.params)?;
        self.arch.check_batch(batch)?;
        let mut scratch = Scratch::default();
        let classes = self.arch.output_dim();
        let logits = logits(&self.arch, &self.params, batch.features, batch.len(), &mut scratch).to_vec();
        let loss = logits
            .chunks(classes)
            .zip(batch.labels)
            .map(|(row, &y)| log_sum_exp(row) - row[y as usize])
            .sum::<f64>()
            / batch.len() as f64;
        Ok(ForwardOutput { logits, loss })
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn gradient(&self, batch: &Batch<'_>) -> Result<(f64, ParamVector)> {
        self.arch.check_params(&self.params)?;
        self.arch.check_batch(batch)?;
        let mut grad = ParamVector::zeros(self.params.len());
        let mut scratch = Scratch::default();
        let loss = loss_and_gradient(&self.arch, &self.params, batch, &mut grad, &mut scratch);
        Ok((loss, grad))
    }
}

/// A fixed batch seen as a loss over parameters, for saliency scoring.
pub struct BatchObjective<'a> {
    arch: &'a Architecture,
    batch: Batch<'a>,
}

impl<'a> BatchObjective<'a> {
    pub fn new(arch: &'a Architecture, batch: Batch<'a>) -> Result<Self> {
        arch.check_batch(&batch)?;
        Ok(BatchObjective { arch, batch })
    }
}

impl Objective for BatchObjective<'_> {
    fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; params.len()];
        let mut scratch = Scratch::default();
        loss_and_gradient(self.arch, params, &self.batch, &mut grad, &mut scratch);
        grad
    }
}
