//! Training: He initialisation, momentum SGD, step learning-rate decay,
//! mini-batching and per-record contiguous cross-validation folds.

mod folds;
mod init;
mod sgd;

pub use folds::{make_folds, FoldPlan};
pub use init::he_init;
pub use sgd::{sgd_momentum_step, Sgd};

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndsignal::{Grid, Mode, Shape};
use crate::network::{derive_seed, Model};
use crate::stage::{argmax, check_labels};

/// `lr(e) = initial · factor^⌊e / step⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub initial: f64,
    pub factor: f64,
    pub step: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            initial: 0.1,
            factor: 0.1,
            step: 20,
        }
    }
}

impl StepSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial * self.factor.powi((epoch / self.step.max(1)) as i32)
    }
}

/// The default 70-epoch schedule: 0.1, divided by 10 every 20 epochs.
pub fn lr_at(epoch: usize) -> Result<f64> {
    let epochs = TrainConfig::default().epochs;
    if epoch >= epochs {
        return Err(Error::InvalidArgument(format!("lr_at: epoch {epoch} outside 0..{epochs}")));
    }
    Ok(StepSchedule::default().lr(epoch))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: StepSchedule,
    pub momentum: f64,
    /// Weight of the previous running statistic in batch-norm updates.
    pub bn_momentum: f64,
    pub seed: u64,
    /// Largest number of samples taped at once. Bigger batches are run in
    /// slices whose gradients are summed before the single optimizer step;
    /// batch statistics are then per slice. `null` tapes the whole batch.
    #[serde(default = "default_micro_batch")]
    pub micro_batch: Option<usize>,
    /// Rescale each step's gradients so their joint L2 norm is at most this;
    /// `null` disables clipping.
    #[serde(default = "default_clip_norm")]
    pub clip_norm: Option<f64>,
}

fn default_micro_batch() -> Option<usize> {
    Some(32)
}

fn default_clip_norm() -> Option<f64> {
    Some(1.0)
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 70,
            batch_size: 128,
            schedule: StepSchedule::default(),
            momentum: 0.9,
            bn_momentum: 0.9,
            seed: 0,
            micro_batch: default_micro_batch(),
            clip_norm: default_clip_norm(),
        }
    }
}

/// Labelled epochs, each `epoch_len` samples, stored back to back.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub epoch_len: usize,
    pub samples: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(epoch_len: usize, samples: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if epoch_len == 0 || samples.len() != epoch_len * labels.len() {
            return Err(Error::shape(
                "Dataset::new",
                format!("{} labels × {epoch_len} samples", labels.len()),
                format!("{} samples", samples.len()),
            ));
        }
        check_labels(&labels)?;
        Ok(Dataset {
            epoch_len,
            samples,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn epoch(&self, i: usize) -> &[f32] {
        &self.samples[i * self.epoch_len..(i + 1) * self.epoch_len]
    }

    pub fn push(&mut self, epoch: &[f32], label: usize) {
        debug_assert_eq!(epoch.len(), self.epoch_len);
        self.samples.extend_from_slice(epoch);
        self.labels.push(label);
    }

    /// `(n, epoch_len, 1)` grid of the selected epochs.
    pub fn batch(&self, indices: &[usize]) -> Grid<f32> {
        let mut data = Vec::with_capacity(indices.len() * self.epoch_len);
        for &i in indices {
            data.extend_from_slice(self.epoch(i));
        }
        Grid::from_parts(Shape::new(indices.len(), self.epoch_len, 1), data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the batch losses.
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made while fitting.
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

/// Splits a shuffled order into batches; a trailing batch of one joins the
/// previous batch because batch statistics need at least two samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size.max(1)).collect();
    if out.len() > 1 && out.last().unwrap().len() == 1 {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// `total += weight · grads`, element by element.
fn accumulate(total: &mut Vec<Option<Grid<f32>>>, grads: Vec<Option<Grid<f32>>>, weight: f32) {
    if total.is_empty() {
        *total = grads.into_iter().map(|g| g.map(|g| g.map(|v| weight * v))).collect();
        return;
    }
    for (t, g) in total.iter_mut().zip(grads) {
        match (t, g) {
            (Some(t), Some(g)) => t.add_assign(&g.map(|v| weight * v)),
            (t @ None, Some(g)) => *t = Some(g.map(|v| weight * v)),
            _ => {}
        }
    }
}

/// Joint L2 norm of all gradients.
pub fn global_norm(grads: &[Option<Grid<f32>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .flat_map(|g| g.data())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// Scales `grads` down to joint norm `max` if they exceed it. Non-finite
/// norms are left alone for the optimizer to reject.
pub fn clip_to_norm(grads: &mut [Option<Grid<f32>>], max: f64) -> f64 {
    let norm = global_norm(grads);
    if norm.is_finite() && norm > max {
        let k = (max / norm) as f32;
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Eval-mode predicted stages for every epoch of `data`, in order.
pub fn predict_dataset(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<Vec<Vec<f32>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(batch_size.max(1)) {
        out.extend(model.predict(&data.batch(chunk))?.into_iter().map(|p| p.probs));
    }
    Ok(out)
}

pub fn accuracy_on(model: &Model<f32>, data: &Dataset, batch_size: usize) -> Result<f64> {
    let probs = predict_dataset(model, data, batch_size)?;
    let hits = probs.iter().zip(&data.labels).filter(|(p, &l)| argmax(p) == l).count();
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Fits `model` in place. `on_epoch` sees each log entry and the current
/// model, and may stop training early with `ControlFlow::Break`.
pub fn train(
    model: &mut Model<f32>,
    data: &Dataset,
    val: Option<&Dataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &Model<f32>) -> Result<ControlFlow<()>>,
) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("train: dataset is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("train: batch_size must be positive".into()));
    }
    let mut opt = Sgd::new(cfg.momentum as f32);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);

        let (mut loss_sum, mut hits) = (0.0, 0usize);
        let groups = batches(&order, cfg.batch_size);
        for (b, idx) in groups.iter().enumerate() {
            let batch_seed = derive_seed(derive_seed(cfg.seed, epoch as u64), !(b as u64));
            let slices = batches(idx, cfg.micro_batch.unwrap_or(idx.len()).max(2));
            let mut grads: Vec<Option<Grid<f32>>> = Vec::new();
            let mut batch_loss = 0.0;
            for (m, slice) in slices.iter().enumerate() {
                let x = data.batch(slice);
                let labels: Vec<usize> = slice.iter().map(|&i| data.labels[i]).collect();
                let dropout_seed = if m == 0 { batch_seed } else { derive_seed(batch_seed, m as u64) };
                // each slice's mean loss counts in proportion to its size
                let weight = slice.len() as f32 / idx.len() as f32;

                let (slice_grads, updates) = {
                    let mut pass = model.forward(&x, Mode::Train, dropout_seed)?;
                    let (loss_var, xent) = pass.tape.softmax_xent(pass.logits, &labels)?;
                    if !xent.loss.is_finite() {
                        return Err(Error::NonFiniteLoss { epoch, batch: b });
                    }
                    batch_loss += weight as f64 * xent.loss as f64;
                    hits += xent
                        .probs
                        .data()
                        .chunks_exact(xent.probs.channels())
                        .zip(&labels)
                        .filter(|(p, &l)| argmax(p) == l)
                        .count();
                    pass.tape.backward(loss_var)?;
                    (pass.param_grads()?, pass.bn_updates())
                };
                accumulate(&mut grads, slice_grads, weight);
                model.apply_bn_updates(&updates, cfg.bn_momentum as f32);
            }
            loss_sum += batch_loss;
            if let Some(max) = cfg.clip_norm {
                clip_to_norm(&mut grads, max);
            }
            opt.step(model.params_mut(), &grads, lr as f32)?;
        }

        let val_acc = match val {
            Some(v) if !v.is_empty() => Some(accuracy_on(model, v, cfg.batch_size)?),
            _ => None,
        };
        let log = EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / groups.len() as f64,
            train_acc: hits as f64 / data.len() as f64,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.0e} loss {:.4} train_acc {:.3}",
            log.train_loss,
            log.train_acc
        );
        let flow = on_epoch(&log, model)?;
        logs.push(log);
        if flow.is_break() {
            break;
        }
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ModelConfig;

    #[test]
    fn schedule_steps_every_twenty_epochs() {
        assert_eq!(lr_at(0).unwrap(), 0.1);
        assert!((lr_at(20).unwrap() - 0.01).abs() < 1e-15);
        assert!((lr_at(45).unwrap() - 0.001).abs() < 1e-15);
        assert!(lr_at(70).is_err());
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(&order, 4);
        assert_eq!(b.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(&order, 3);
        assert_eq!(b.len(), 3);
        assert_eq!(batches(&order[..1], 4).len(), 1);
    }

    fn toy_data(n: usize, len: usize) -> Dataset {
        let mut d = Dataset {
            epoch_len: len,
            ..Dataset::default()
        };
        for i in 0..n {
            let label = i % 5;
            let epoch: Vec<f32> = (0..len).map(|t| ((t * (label + 1)) as f32 * 0.3).sin()).collect();
            d.push(&epoch, label);
        }
        d
    }

    #[test]
    fn clipping_rescales_only_large_gradients() {
        let grid = |v: &[f32]| Some(Grid::from_parts(Shape::new(1, v.len(), 1), v.to_vec()));
        // joint norm of (3) and (0, 4) is 5
        let mut g = vec![grid(&[3.0]), None, grid(&[0.0, 4.0])];
        assert_eq!(clip_to_norm(&mut g, 10.0), 5.0);
        assert_eq!(g[0].as_ref().unwrap().data(), &[3.0]);
        assert_eq!(clip_to_norm(&mut g, 1.0), 5.0);
        assert!((g[0].as_ref().unwrap().data()[0] - 0.6).abs() < 1e-6);
        assert!((g[2].as_ref().unwrap().data()[1] - 0.8).abs() < 1e-6);
        assert!((global_norm(&g) - 1.0).abs() < 1e-6);

        let mut bad = vec![grid(&[f32::NAN, 1.0])];
        assert!(clip_to_norm(&mut bad, 1.0).is_nan());
        assert_eq!(bad[0].as_ref().unwrap().data()[1], 1.0);
    }

    #[test]
    fn sliced_batches_give_the_whole_batch_update() {
        // without batch statistics or dropout the per-sample gradients are
        // independent, so slicing only changes summation order
        let data = toy_data(12, 96);
        let mut mc = ModelConfig::tiny();
        mc.backbone.batch_norm = false;
        let run = |micro_batch| {
            let cfg = TrainConfig {
                epochs: 1,
                batch_size: 12,
                micro_batch,
                ..TrainConfig::default()
            };
            let mut m = Model::<f32>::new(mc.clone(), 3).unwrap();
            let logs = train(&mut m, &data, None, &cfg, |_, _| Ok(ControlFlow::Continue(()))).unwrap();
            (m, logs[0].train_loss)
        };
        let (whole, whole_loss) = run(None);
        for micro in [2, 5] {
            let (sliced, loss) = run(Some(micro));
            assert!((loss - whole_loss).abs() < 1e-5 * whole_loss.abs().max(1.0), "micro {micro}");
            for (a, b) in whole.params().iter().zip(sliced.params().iter()) {
                let scale = a.value.max_abs().max(1e-3);
                for (x, y) in a.value.data().iter().zip(b.value.data()) {
                    assert!((x - y).abs() <= 1e-4 * scale, "micro {micro}, {}: {x} vs {y}", a.name);
                }
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_losses() {
        let data = toy_data(10, 96);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 7,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = Model::<f32>::new(ModelConfig::tiny(), 1).unwrap();
            train(&mut m, &data, Some(&data), &cfg, |_, _| Ok(ControlFlow::Continue(()))).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a[0].val_acc.is_some());
    }

    #[test]
    fn callback_can_stop_early() {
        let data = toy_data(6, 96);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 3,
            ..TrainConfig::default()
        };
        let mut m = Model::<f32>::new(ModelConfig::tiny(), 1).unwrap();
        let logs = train(&mut m, &data, None, &cfg, |l, _| {
            Ok(if l.epoch == 1 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
        })
        .unwrap();
        assert_eq!(logs.len(), 2);
    }

    #[test]
    fn huge_learning_rate_reports_the_failing_batch() {
        let data = toy_data(8, 96);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 4,
            schedule: StepSchedule {
                initial: 1e30,
                factor: 1.0,
                step: 20,
            },
            ..TrainConfig::default()
        };
        let mut m = Model::<f32>::new(ModelConfig::tiny(), 1).unwrap();
        let err = train(&mut m, &data, None, &cfg, |_, _| Ok(ControlFlow::Continue(()))).unwrap_err();
        assert!(err.is_numeric(), "{err}");
    }
}
