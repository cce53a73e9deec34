//! Mini-batch maximum likelihood with Adam and patience-based stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, FlowModel, Sample};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::pretrain(0)
    }
}

impl TrainConfig {
    pub fn pretrain(seed: u64) -> Self {
        Self {
            batch_size: 200,
            learning_rate: 5e-4,
            patience: 20,
            max_epochs: 1000,
            seed,
        }
    }

    pub fn finetune(seed: u64) -> Self {
        Self {
            patience: 3,
            ..Self::pretrain(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::ConfigInvalid("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ConfigInvalid("learning_rate must be > 0".into()));
        }
        if self.patience == 0 {
            return Err(Error::ConfigInvalid("patience must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::ConfigInvalid("max_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Patience counter: the best loss starts at `+∞`, an epoch improves only if
/// its loss is strictly lower, and training stops once `patience`
/// consecutive epochs fail to improve.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch loss; returns `true` when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Full-dataset loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the returned parameters.
    pub best_loss: f64,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_losses.len()
    }
}

/// Trains in place and leaves the model at the lowest full-dataset loss seen,
/// counting the starting parameters as a candidate.
pub fn train(model: &mut FlowModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySeries);
    }
    data.validate(model.dims(), model.cond_dims(), None)?;
    let samples = &data.samples;
    let mut rng = seed::rng(cfg.seed);
    let mut params = model.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut stopper = EarlyStopping::new(cfg.patience);

    let initial_loss = model.loss(samples);
    let mut best_loss = initial_loss;
    let mut best_params = params.clone();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut stopped_early = false;

    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (_, grad) = model.loss_and_grad(batch);
            adam.step(&mut params, &grad);
            model.set_params(&params);
        }
        let loss = model.loss(samples);
        epoch_losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best_params.copy_from_slice(&params);
        }
        if stopper.update(loss) {
            stopped_early = true;
            break;
        }
    }
    model.set_params(&best_params);
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        best_loss,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn patience_counter() {
        let mut s = EarlyStopping::new(3);
        let stops: Vec<bool> = [5.0, 4.0, 4.0, 4.0, 4.0].iter().map(|&l| s.update(l)).collect();
        assert_eq!(stops, vec![false, false, false, false, true]);
    }

    #[test]
    fn improvement_resets_counter() {
        let mut s = EarlyStopping::new(2);
        assert!(!s.update(3.0));
        assert!(!s.update(3.0));
        assert!(!s.update(2.0));
        assert!(!s.update(2.5));
        assert!(s.update(2.0));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::pretrain(0).validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::finetune(0)
        };
        assert!(bad.validate().is_err());
        assert_eq!(TrainConfig::finetune(0).patience, 3);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2, 0.1);
        let mut p = [1.0, -1.0];
        a.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn training_never_worsens_loss() {
        let mut rng = seed::rng(1);
        let samples: Vec<Sample> = (0..400)
            .map(|_| {
                let t: f64 = StandardNormal.sample(&mut rng);
                let e: f64 = StandardNormal.sample(&mut rng);
                Sample::pretrain(vec![2.0 + t], vec![t + 0.5 * e])
            })
            .collect();
        let data = Dataset::new(samples);
        let mut m = FlowModel::new(1, 1, 16, 3, 2, &mut rng);
        let cfg = TrainConfig {
            max_epochs: 15,
            learning_rate: 5e-3,
            ..TrainConfig::pretrain(4)
        };
        let rep = train(&mut m, &data, &cfg).unwrap();
        assert!(rep.best_loss <= rep.initial_loss);
        assert!(rep.best_loss < rep.initial_loss - 0.5);
        assert!((m.loss(&data.samples) - rep.best_loss).abs() < 1e-12);
    }
}
