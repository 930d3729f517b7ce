use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `w <- w - eta * g`
    Sgd,
    /// `v <- m * v + g; w <- w - eta * v`
    Momentum { momentum: f64 },
    /// `w <- w - eta * (g + mu * (w - w_ref))`, `w_ref` the round-start model.
    FedProx { mu: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        match self.kind {
            OptimizerKind::Momentum { momentum } if !(0.0..1.0).contains(&momentum) => Err(
                Error::config(format!("momentum must be in [0, 1), got {momentum}")),
            ),
            OptimizerKind::FedProx { mu } if !(mu >= 0.0 && mu.is_finite()) => Err(Error::config(
                format!("proximal coefficient must be >= 0, got {mu}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Per-round optimizer state. The velocity starts at zero for each round's
/// local training.
#[derive(Clone, Debug)]
pub struct OptimizerState<'a> {
    config: OptimizerConfig,
    velocity: Vec<f64>,
    reference: Option<&'a [f64]>,
}

impl<'a> OptimizerState<'a> {
    pub fn new(config: OptimizerConfig, len: usize, reference: Option<&'a [f64]>) -> Result<Self> {
        config.validate()?;
        let velocity = match config.kind {
            OptimizerKind::Momentum { .. } => vec![0.0; len],
            _ => Vec::new(),
        };
        if let OptimizerKind::FedProx { .. } = config.kind {
            match reference {
                Some(r) if r.len() == len => {}
                Some(r) => {
                    return Err(Error::config(format!(
                        "proximal reference has {} entries, expected {len}",
                        r.len()
                    )))
                }
                None => return Err(Error::config("FedProx needs a reference model")),
            }
        }
        Ok(OptimizerState {
            config,
            velocity,
            reference,
        })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::config(format!(
                "gradient has {} entries, parameters {}",
                grad.len(),
                params.len()
            )));
        }
        let eta = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (w, g) in params.iter_mut().zip(grad) {
                    *w -= eta * g;
                }
            }
            OptimizerKind::Momentum { momentum } => {
                if self.velocity.len() != params.len() {
                    return Err(Error::config("velocity length does not match parameters"));
                }
                for ((w, g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
                    *v = momentum * *v + g;
                    *w -= eta * *v;
                }
            }
            OptimizerKind::FedProx { mu } => {
                let reference = self.reference.expect("checked in new");
                if reference.len() != params.len() {
                    return Err(Error::config("proximal reference length does not match parameters"));
                }
                for ((w, g), r) in params.iter_mut().zip(grad).zip(reference) {
                    *w -= eta * (g + mu * (*w - r));
                }
            }
        }
        Ok(())
    }
}
