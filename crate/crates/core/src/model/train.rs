use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::nn::{
    argmax, softmax_xent, softmax_xent_grad, Adam, AdamConfig, Sequential, StepDecay, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    /// The rate is divided by `1 + decay` every `epochs_per_decay` epochs.
    pub decay: f64,
    pub epochs_per_decay: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Relative improvement of the best loss that counts as progress.
    pub min_delta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay: 0.1,
            epochs_per_decay: 3,
            max_epochs: 30,
            patience: 3,
            min_delta: 1e-4,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.max_epochs >= 1, "max_epochs must be at least 1");
        ensure!(self.patience >= 1, "patience must be at least 1");
        ensure!(self.batch_size >= 1, "batch size must be at least 1");
        ensure!(
            self.epochs_per_decay >= 1,
            "epochs_per_decay must be at least 1"
        );
        ensure!(
            self.lr0.is_finite() && self.lr0 >= 0.0,
            "learning rate must be finite and non-negative"
        );
        ensure!(
            self.decay.is_finite() && self.decay > -1.0,
            "decay must be greater than -1"
        );
        ensure!(self.min_delta >= 0.0, "min_delta must be non-negative");
        Ok(())
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            initial: self.lr0,
            decay: self.decay,
            every: self.epochs_per_decay,
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.schedule().rate(epoch)
    }
}

/// Stops once the best loss has not improved by a relative `min_delta`
/// for `patience` consecutive epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: None,
            stale: 0,
        }
    }

    /// Records one epoch's loss; returns `true` when training should stop.
    pub fn observe(&mut self, loss: f64) -> bool {
        match self.best {
            Some(best) if loss >= best - self.min_delta * best.abs() => self.stale += 1,
            _ => {
                self.best = Some(loss);
                self.stale = 0;
            }
        }
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Nan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// One network input and its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Tensor,
    pub label: usize,
}

/// Mini-batch Adam on softmax cross-entropy with step-decayed learning rate
/// and early stopping on the epoch training loss.
///
/// The example order is reshuffled every epoch from `cfg.seed`, so equal
/// inputs give identical runs. A non-finite loss ends training with
/// [`StopReason::Nan`] and leaves the offending batch unapplied.
pub fn train(
    net: &mut Sequential,
    examples: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    ensure!(!examples.is_empty(), "training set is empty");
    let n_classes = net.output_len()?;
    for (i, ex) in examples.iter().enumerate() {
        ensure!(
            ex.label < n_classes,
            "example {i} has label {} but the model has {n_classes} classes",
            ex.label
        );
    }

    let mut adam = Adam::new(AdamConfig::default(), &net.param_sizes());
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epochs = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut correct = 0usize;

        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Vec<Vec<f64>> = net.param_sizes().iter().map(|&n| vec![0.0; n]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = &examples[i];
                let trace = net.forward_trace(&ex.input)?;
                let logits = trace.last().unwrap();
                let (loss, probs) = softmax_xent(logits.data(), ex.label)?;
                batch_loss += loss;
                if argmax(&probs) == ex.label {
                    correct += 1;
                }
                let g = Tensor::new(logits.shape().to_vec(), softmax_xent_grad(&probs, ex.label))?;
                for (a, g) in acc.iter_mut().zip(net.backward(&trace, g)?) {
                    for (a, g) in a.iter_mut().zip(g) {
                        *a += g;
                    }
                }
            }
            if !batch_loss.is_finite() {
                log::error!("non-finite training loss in epoch {}; stopping", epoch + 1);
                return Ok(TrainHistory {
                    epochs,
                    stop_reason: StopReason::Nan,
                });
            }
            total_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for v in a.iter_mut() {
                    *v *= scale;
                }
            }
            adam.update(net.params_mut(), &acc, lr)?;
        }

        let record = EpochRecord {
            loss: total_loss / examples.len() as f64,
            accuracy: correct as f64 / examples.len() as f64,
            lr,
        };
        log::info!(
            "epoch {}: loss {:.4} accuracy {:.3} lr {:.3e}",
            epoch + 1,
            record.loss,
            record.accuracy,
            lr
        );
        let stop = stopper.observe(record.loss);
        epochs.push(record);
        if stop {
            return Ok(TrainHistory {
                epochs,
                stop_reason: StopReason::Patience,
            });
        }
    }
    Ok(TrainHistory {
        epochs,
        stop_reason: StopReason::MaxEpochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_fires_after_three_stale_epochs() {
        let mut s = EarlyStopping::new(3, 1e-4);
        let stops: Vec<bool> = [1.0, 0.9, 0.9, 0.9, 0.9]
            .iter()
            .map(|&l| s.observe(l))
            .collect();
        assert_eq!(stops, vec![false, false, false, false, true]);
    }

    #[test]
    fn tiny_improvements_do_not_reset_patience() {
        let mut s = EarlyStopping::new(2, 1e-2);
        assert!(!s.observe(1.0));
        assert!(!s.observe(0.995));
        assert!(s.observe(0.992));
        assert_eq!(s.best(), Some(1.0));
    }

    #[test]
    fn real_improvement_resets_counter() {
        let mut s = EarlyStopping::new(2, 1e-4);
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.0));
        assert!(!s.observe(0.5));
        assert!(!s.observe(0.5));
        assert!(s.observe(0.6));
    }

    #[test]
    fn schedule_divides_every_three_epochs() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at_epoch(2), 1e-3);
        assert!((cfg.lr_at_epoch(3) - 1e-3 / 1.1).abs() < 1e-18);
    }
}
