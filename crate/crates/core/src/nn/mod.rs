//! Dense MLP kernel: ReLU hidden layers, softmax cross-entropy head, exact
//! backpropagation and the local optimizers.

mod client;
mod gemm;
mod model;
mod optim;

pub use client::{client_opt, ClientOutcome, ClientTask, LocalTraining, PurgeDirective, PurgeMethod};
pub(crate) use model::logits as model_logits;
pub use model::{
    softmax_rows, Architecture, Batch, BatchObjective, ForwardOutput, LayerLayout, MlpModel,
    ParamVector, Scratch,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
