use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{adam_step, evaluate, loss_and_grad, AdamState, LinearProbe, Samples};
use crate::store::{EmbeddingSet, LabelSpace};

/// Optimizer and schedule settings for [`train_probe`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Decoupled decay applied to the weights only.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 1024,
            max_epochs: 100,
            patience: 5,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("train config: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Outcome of feeding one epoch's validation loss to [`EarlyStopping`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopVerdict {
    Improved,
    Stale,
    Stop,
}

/// Patience-based stopping on a loss that should decrease.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Only a strictly lower loss counts as an improvement.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopVerdict {
        match self.best {
            Some((_, best)) if loss >= best => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopVerdict::Stop
                } else {
                    StopVerdict::Stale
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopVerdict::Improved
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on each batch before its update, averaged over the epoch.
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

/// Trains a probe on `train`, early-stopping on the loss over `val`.
///
/// Both sets are resolved against `labelspace` (its task names the label to
/// learn). See [`train_samples`] for the procedure.
pub fn train_probe(
    train: &EmbeddingSet,
    val: &EmbeddingSet,
    labelspace: &LabelSpace,
    config: &TrainConfig,
) -> Result<(LinearProbe, TrainHistory)> {
    let train = Samples::from_set(train, labelspace)?;
    let val = Samples::from_set(val, labelspace)?;
    train_samples(&train, &val, labelspace, config)
}

/// Softmax regression from zero-initialized parameters.
///
/// Every epoch draws a fresh permutation of the training rows from one
/// `Xoshiro256PlusPlus` stream seeded with `config.seed`, walks it in batches
/// of `batch_size` (the last batch may be short) taking one Adam step per
/// batch, then measures the validation loss. Training ends after
/// `max_epochs`, or once `patience` consecutive epochs fail to lower the best
/// validation loss. The parameters of the best epoch are returned.
pub fn train_samples(
    train: &Samples,
    val: &Samples,
    labelspace: &LabelSpace,
    config: &TrainConfig,
) -> Result<(LinearProbe, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    if train.dim() != val.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: val.dim(),
        });
    }
    let d = train.dim();
    let mut probe = LinearProbe::zeros(labelspace.clone(), d);
    let mut state = AdamState::new(&probe);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = probe.clone();
    let mut history = TrainHistory::default();

    let mut order: Vec<usize> = Vec::with_capacity(train.len());
    let mut batch_f: Vec<f32> = Vec::with_capacity(config.batch_size.min(train.len()) * d);
    let mut batch_y: Vec<usize> = Vec::with_capacity(config.batch_size.min(train.len()));

    for epoch in 1..=config.max_epochs {
        order.clear();
        order.extend(0..train.len());
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct) = (0.0, 0);
        for rows in order.chunks(config.batch_size) {
            batch_f.clear();
            batch_y.clear();
            for &r in rows {
                batch_f.extend_from_slice(train.row(r));
                batch_y.push(train.labels()[r]);
            }
            let lg = loss_and_grad(&probe, &batch_f, &batch_y)?;
            if !lg.loss.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("training loss {} at epoch {epoch}, step {}", lg.loss, state.t + 1),
                });
            }
            loss_sum += lg.loss * rows.len() as f64;
            correct += lg.correct;
            adam_step(&mut probe, &lg, &mut state, config)?;
        }

        let (val_loss, val_accuracy) = evaluate(&probe, val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                what: format!("validation loss {val_loss} at epoch {epoch}"),
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        });
        match stopper.observe(epoch, val_loss) {
            StopVerdict::Improved => best.clone_from(&probe),
            StopVerdict::Stale => {}
            StopVerdict::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch().expect("at least one epoch ran");
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopping_rule() {
        let mut s = EarlyStopping::new(2);
        assert_eq!(s.observe(1, 1.0), StopVerdict::Improved);
        assert_eq!(s.observe(2, 0.5), StopVerdict::Improved);
        assert_eq!(s.observe(3, 0.5), StopVerdict::Stale);
        assert_eq!(s.observe(4, 0.4), StopVerdict::Improved);
        assert_eq!(s.observe(5, 0.6), StopVerdict::Stale);
        assert_eq!(s.observe(6, 0.7), StopVerdict::Stop);
        assert_eq!(s.best_epoch(), Some(4));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                patience: 101,
                ..Default::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn empty_split_rejected() {
        let space = LabelSpace::new("t", vec!["a".into(), "b".into()]).unwrap();
        let some = Samples::new(1, vec![1.0], vec![0], 2).unwrap();
        let none = Samples::new(1, vec![], vec![], 2).unwrap();
        assert!(train_samples(&some, &none, &space, &TrainConfig::default()).is_err());
        assert!(train_samples(&none, &some, &space, &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let c: TrainConfig = serde_json::from_str(r#"{"patience": 3}"#).unwrap();
        assert_eq!(c.patience, 3);
        assert_eq!(c.batch_size, 1024);
    }
}
