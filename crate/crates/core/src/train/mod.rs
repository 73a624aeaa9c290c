//! Cross-entropy training with momentum SGD under a warmup-cosine schedule, and top-1
//! evaluation.

pub mod loss;
pub mod schedule;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use loss::{argmax, cross_entropy};
pub use schedule::ScheduleConfig;

use crate::dataset::BatchLoader;
use crate::error::{Error, Result};
use crate::model::{save_checkpoint, Checkpoint, ModelParams};
use crate::nn::{Ctx, Module};
use crate::ops::{sgd_step, SgdConfig};
use crate::seed::derive_seed;
use crate::tensor::Scalar;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.bcrk";
pub const FINAL_CHECKPOINT: &str = "final.bcrk";

/// Momentum buffers for every learnable tensor, in visiting order.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    pub cfg: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new<M: Module<T>>(cfg: SgdConfig, model: &M) -> Self {
        let mut velocity = Vec::new();
        model.visit("", &mut |_, role, t| {
            if role.learnable() {
                velocity.push(vec![T::zero(); t.len()]);
            }
        });
        Self { cfg, velocity }
    }

    /// Updates every learnable tensor from its gradient slot. Weight decay reaches conv
    /// weights only; tensors without a gradient are left alone.
    pub fn step<M: Module<T>>(&mut self, model: &mut M, lr: f64) {
        let cfg = self.cfg;
        let mut vel = self.velocity.iter_mut();
        model.visit_mut("", &mut |_, role, t| {
            if !role.learnable() {
                return;
            }
            let v = vel.next().expect("optimizer built for another model");
            let wd = if role.decays() { cfg.weight_decay } else { 0.0 };
            if let (data, Some(grad)) = t.data_and_grad() {
                sgd_step(data, grad, v, lr, cfg.momentum, wd);
            }
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Rate used by the last step of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub schedule: ScheduleConfig,
    pub sgd: SgdConfig,
    pub seed: u64,
    /// Where metrics and checkpoints go. Nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Report zero wall time so logs of identical runs compare equal byte for byte.
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn new(epochs: usize, seed: u64) -> Self {
        Self {
            schedule: ScheduleConfig::with_epochs(epochs),
            sgd: SgdConfig::default(),
            seed,
            out_dir: None,
            deterministic: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams<f32>,
    pub best: ModelParams<f32>,
    /// 0 when no epoch ran or none had validation data.
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub steps: u64,
}

/// Trains `model` for `cfg.schedule.total_epochs` epochs. The best checkpoint is the one
/// with the highest validation accuracy, later epochs winning ties.
pub fn train(
    mut model: ModelParams<f32>,
    train_data: &BatchLoader,
    val_data: Option<&BatchLoader>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.schedule.validate()?;
    if cfg.schedule.total_epochs > 0 && train_data.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut metrics_out = match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join(METRICS_FILE))?))
        }
        None => None,
    };
    let save = |m: &ModelParams<f32>, step: u64, name: &str| -> Result<()> {
        if let Some(dir) = &cfg.out_dir {
            save_checkpoint(
                &Checkpoint {
                    model: m.clone(),
                    step,
                },
                dir.join(name),
            )?;
        }
        Ok(())
    };

    let mut opt = Optimizer::new(cfg.sgd, &model);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut metrics = Vec::new();
    let mut steps = 0u64;
    let nb = train_data.num_batches();
    let start = Instant::now();
    save(&model, 0, BEST_CHECKPOINT)?;

    for epoch in 0..cfg.schedule.total_epochs {
        let (mut loss_sum, mut correct, mut seen, mut lr) = (0.0, 0usize, 0usize, 0.0);
        for (b, batch) in train_data.epoch(epoch as u64).enumerate() {
            let batch = batch?;
            lr = cfg.schedule.lr_at(epoch as f64 + b as f64 / nb as f64);
            let mut ctx = Ctx::train(derive_seed(&[cfg.seed, epoch as u64, b as u64, 0xd0]));
            model.zero_grad();
            let (logits, trace) = model.forward(&batch.features, &mut ctx)?;
            let (loss, grad) = cross_entropy(&logits, &batch.labels)?;
            if !loss.is_finite() {
                log::error!(
                    "non-finite loss; batch {b} of epoch {} holds examples {:?}",
                    epoch + 1,
                    batch.indices
                );
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: b,
                    lr,
                });
            }
            model.backward(&trace, &grad)?;
            model.commit_stats(&trace);
            opt.step(&mut model, lr);
            steps += 1;

            let k = model.cfg.n_classes;
            let n = batch.labels.len();
            loss_sum += loss * n as f64;
            correct += logits
                .data()
                .chunks(k)
                .zip(&batch.labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            seen += n;
        }

        let val_acc = match val_data {
            Some(v) if !v.is_empty() => Some(evaluate(&model, v)?),
            _ => None,
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_acc,
            wall_time_s: if cfg.deterministic {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            },
        };
        log::info!(
            "epoch {:>3} lr {:.5} loss {:.4} train {:.4} val {}",
            m.epoch,
            m.lr,
            m.train_loss,
            m.train_acc,
            m.val_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        if let Some(out) = metrics_out.as_mut() {
            serde_json::to_writer(&mut *out, &m)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        if let Some(acc) = val_acc {
            if acc >= best_acc {
                best_acc = acc;
                best_epoch = epoch + 1;
                best = model.clone();
                save(&best, steps, BEST_CHECKPOINT)?;
            }
        }
        metrics.push(m);
    }

    if best_epoch == 0 {
        best = model.clone();
        save(&best, steps, BEST_CHECKPOINT)?;
    }
    save(&model, steps, FINAL_CHECKPOINT)?;
    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        metrics,
        steps,
    })
}

/// Predicted class per example, in loader order.
pub fn predict<T: Scalar>(model: &ModelParams<T>, data: &BatchLoader) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    for batch in data.epoch(0) {
        let batch = batch?;
        let x = batch.features.cast::<T>();
        out.extend(model.predict(&x)?.iter().map(|row| argmax(row)));
    }
    Ok(out)
}

/// Top-1 accuracy in eval mode.
pub fn evaluate<T: Scalar>(model: &ModelParams<T>, data: &BatchLoader) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty split".into()));
    }
    let pred = predict(model, data)?;
    Ok(accuracy(&pred, &labels(data)))
}

pub fn labels(data: &BatchLoader) -> Vec<usize> {
    data.examples().iter().map(|e| e.label).collect()
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_of_four() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]), 0.75);
    }
}
