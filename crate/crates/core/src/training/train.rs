use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Clip;
use crate::engine::{sgd_update, Graph};
use crate::models::{assemble_batch, forward, Model, UnitRef};

use super::{evaluate_units, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Factor applied to the learning rate from [`TrainConfig::decay_epoch`] on.
    pub lr_decay: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 16,
            seed: 42,
            lr_decay: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(TrainError::Config(format!("lr decay {} must be positive", self.lr_decay)));
        }
        Ok(())
    }

    /// First epoch (0-based) trained with the decayed rate: two thirds in.
    pub fn decay_epoch(&self) -> usize {
        2 * self.epochs / 3
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f32 {
        if epoch >= self.decay_epoch() {
            self.learning_rate * self.lr_decay
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_unit_acc: Option<f64>,
}

impl EpochLog {
    /// `epoch,mean_loss,val_unit_acc`; accuracy is empty without a val split.
    pub fn csv_line(&self) -> String {
        let acc = self.val_unit_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
        format!("{},{:.6},{}", self.epoch, self.mean_loss, acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub epochs: Vec<EpochLog>,
}

/// Unit order of an epoch: a pure function of `(seed, epoch)`.
fn epoch_order(units: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut rng);
    order
}

fn row_xent(logits: &[f32], label: usize) -> f64 {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = max + logits.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    lse - logits[label] as f64
}

/// Mini-batch SGD over every unit of `train_clips`, pooled across videos.
pub fn train(
    model: &mut Model,
    train_clips: &[Clip],
    val_clips: &[Clip],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train_clips.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let per_clip = model.config.temporal_mode.units_per_clip();
    let units: Vec<UnitRef> = train_clips
        .iter()
        .flat_map(|c| (0..per_clip).map(|u| UnitRef::new(c, &model.config, u)))
        .collect();
    let mut report = TrainReport {
        loss_curve: Vec::with_capacity(config.epochs),
        epochs: Vec::with_capacity(config.epochs),
    };
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let order = epoch_order(units.len(), config.seed, epoch);
        let mut unit_loss = vec![0.0f64; units.len()];
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch_units: Vec<UnitRef> = chunk.iter().map(|&i| units[i]).collect();
            let batch = assemble_batch(&model.config, &batch_units)?;
            let mut g = Graph::new();
            let nodes = forward(&model.config, &mut g, &model.params, &batch)?;
            let loss = g.softmax_xent(nodes.logits, &batch.labels)?;
            let value = g.value(loss).values()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    first_unit: chunk[0],
                    loss: value,
                });
            }
            let logits = g.value(nodes.logits).values();
            let c = model.config.class_count;
            for (row, (&u, &label)) in chunk.iter().zip(&batch.labels).enumerate() {
                unit_loss[u] = row_xent(&logits[row * c..(row + 1) * c], label);
            }
            model.params.zero_grads();
            g.backward(loss, &mut model.params)?;
            sgd_update(&mut model.params, lr)?;
        }
        model.params.clear_grads();
        // Summed in unit order, so the value does not depend on the shuffle.
        let mean_loss = unit_loss.iter().sum::<f64>() / units.len() as f64;
        let val_unit_acc = if val_clips.is_empty() {
            None
        } else {
            let preds = evaluate_units(model, val_clips)?;
            Some(preds.iter().filter(|p| p.predicted == p.truth).count() as f64 / preds.len() as f64)
        };
        let log = EpochLog {
            epoch,
            mean_loss,
            val_unit_acc,
        };
        log::info!("{}", log.csv_line());
        on_epoch(&log);
        report.loss_curve.push(mean_loss);
        report.epochs.push(log);
    }
    Ok(report)
}
