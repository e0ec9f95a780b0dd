use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{accumulate, init_model, Example, ModelParams, Workspace};
use crate::error::{Error, Result};
use crate::rng;

/// Mini-batch SGD with optional momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Exponent of the CDF loss.
    pub loss_exponent: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 20,
            batch_size: 32,
            hidden: 512,
            loss_exponent: 2.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must be in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig("epochs, batch size and hidden must be positive".into()));
        }
        if !(self.loss_exponent >= 1.0) {
            return Err(Error::InvalidConfig("loss exponent must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean per-example loss of each epoch.
    pub history: Vec<f64>,
}

/// Initialize from `config.seed` and train on `data`.
pub fn train<E: Example>(data: &[E], config: &TrainConfig) -> Result<TrainOutcome> {
    let first = data.first().ok_or(Error::EmptySet("training".into()))?;
    let params = init_model(
        first.features().len(),
        first.trait_input().len(),
        config.hidden,
        first.target().bins(),
        config.seed,
    )?;
    train_from(params, data, config)
}

/// Continue training `params` on `data`. Shuffle order and accumulation order
/// are fixed by the seed.
pub fn train_from<E: Example>(mut params: ModelParams, data: &[E], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySet("training".into()));
    }
    params.check_shapes()?;
    for ex in data {
        super::check_inputs(&params, ex.features(), ex.trait_input())?;
        if ex.target().bins() != params.bins {
            return Err(Error::DimensionMismatch { expected: params.bins, got: ex.target().bins() });
        }
    }

    let mut ws = Workspace::new(&params);
    let mut grad = params.zeros_like();
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::substream(config.seed, &format!("epoch-{epoch}")));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            for &i in batch {
                let ex = &data[i];
                epoch_loss += accumulate(
                    &params,
                    ex.features(),
                    ex.trait_input(),
                    ex.target().mass(),
                    config.loss_exponent,
                    &mut ws,
                    &mut grad,
                );
            }
            let scale = config.learning_rate / batch.len() as f64;
            for ((p, v), g) in params
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = config.momentum * *vi - scale * gi;
                    *pi += *vi;
                }
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(mean);
    }
    Ok(TrainOutcome { params, history })
}
