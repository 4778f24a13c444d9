use rand::seq::SliceRandom;

use super::net::{data_loss, loss_and_grad, DatasetPair, PerceptionNet, DEFAULT_LAYERS};
use crate::error::{Error, Result};
use crate::rng;

pub const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of the data held out for validation.
    pub val_fraction: f64,
    pub l2: f64,
    pub layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            epochs: 500,
            seed: 0,
            val_fraction: 0.2,
            l2: 1e-6,
            layers: DEFAULT_LAYERS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid("validation fraction must lie in (0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::invalid("L2 penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Mean squared error (no penalty) on both splits after `epoch` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: PerceptionNet,
    pub best_epoch: usize,
    /// Entry 0 holds the losses of the initial net.
    pub history: Vec<EpochLoss>,
}

impl TrainResult {
    pub fn best_val(&self) -> f64 {
        self.history[self.best_epoch].val
    }

    pub fn initial_val(&self) -> f64 {
        self.history[0].val
    }
}

/// Deterministic train/validation split: `(train, val)` index lists.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::rng(rng::derive(seed, 0)));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Mini-batch SGD with momentum. Single-threaded and deterministic in `cfg`.
pub fn train(data: &[DatasetPair], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if data.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 pairs, got {}", data.len())));
    }
    let mut net = PerceptionNet::init(&cfg.layers, rng::derive(cfg.seed, 1))?;
    let (train_idx, val_idx) = split_indices(data.len(), cfg.val_fraction, cfg.seed);
    let train_set: Vec<DatasetPair> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let val_set: Vec<DatasetPair> = val_idx.iter().map(|&i| data[i].clone()).collect();

    let eval = |net: &PerceptionNet, epoch: usize| -> Result<EpochLoss> {
        let e = EpochLoss { epoch, train: data_loss(net, &train_set)?, val: data_loss(net, &val_set)? };
        if !(e.train.is_finite() && e.val.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        Ok(e)
    };
    let mut history = vec![eval(&net, 0)?];
    let mut best = (0, net.clone());
    let mut velocity = vec![0.0; net.params().len()];
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng::rng(rng::derive(cfg.seed, 1 + epoch as u64)));
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<DatasetPair> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grad) = loss_and_grad(&net, &batch, cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = MOMENTUM * *v - cfg.learning_rate * g;
                *p += *v;
            }
        }
        if net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        let e = eval(&net, epoch)?;
        log::debug!("epoch {epoch}: train {:.5} val {:.5}", e.train, e.val);
        if e.val < history[best.0].val {
            best = (epoch, net.clone());
        }
        history.push(e);
    }
    Ok(TrainResult { net: best.1, best_epoch: best.0, history })
}
