//! Adam, the base training loop and layer-frozen fine-tuning.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::layers::{cross_entropy_2class, Parameterized};
use crate::metrics::{binarize, ConfusionCounts, MetricsReport, THRESHOLD};
use crate::model::{class_probability, NetworkModel};
use crate::numcore::{Prng, Scalar, Tensor};
use crate::synthgen::Sample;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of samples used for training.
    pub split: f64,
    pub seed: u64,
    /// Leading layer units kept fixed.
    pub freeze_prefix: usize,
    /// Loss weight of heterogeneity pixels.
    pub positive_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            split: 0.8,
            seed: 0,
            freeze_prefix: 0,
            positive_weight: 1.0,
        }
    }
}

impl TrainConfig {
    /// Transfer-learning defaults: 30 epochs with stage 1 frozen.
    pub fn finetune() -> Self {
        TrainConfig {
            epochs: 30,
            freeze_prefix: 2,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split fraction {} must lie in (0, 1)", self.split)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.positive_weight > 0.0) || !self.positive_weight.is_finite() {
            return Err(Error::Config(format!(
                "positive-class weight {} must be positive",
                self.positive_weight
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle, then the first `round(fraction * n)` items train.
pub fn split_dataset<S: Clone>(samples: &[S], fraction: f64, seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    if samples.len() < 2 {
        return Err(Error::Size(format!(
            "cannot split {} samples into train and test sets",
            samples.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    Prng::new(seed).shuffle(&mut order);
    let cut = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

/// Bias-corrected Adam with per-parameter moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[Vec<usize>], learning_rate: f64) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn for_model(model: &impl Parameterized<T>, learning_rate: f64) -> Self {
        let shapes: Vec<Vec<usize>> = model.parameters().iter().map(|(_, t)| t.shape().to_vec()).collect();
        Self::new(&shapes, learning_rate)
    }

    /// One update. Frozen parameters and their moments are left untouched.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>], frozen: &[bool]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || frozen.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "adam step with {} parameters, {} gradients and {} flags for {} moments",
                params.len(),
                grads.len(),
                frozen.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::Dimension(format!(
                    "parameter {i}: shape {:?}, gradient {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (c1, c2) = (1.0 - self.beta1, 1.0 - self.beta2);
        let (one_b1, one_b2) = (T::from_f64(c1), T::from_f64(c2));
        let bias1 = T::from_f64(1.0 - self.beta1.powi(t));
        let bias2 = T::from_f64(1.0 - self.beta2.powi(t));
        let (lr, eps) = (T::from_f64(self.learning_rate), T::from_f64(self.epsilon));
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if frozen[i] {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean training loss over the epoch.
    pub loss: f64,
    /// Held-out metrics after the epoch.
    pub metrics: MetricsReport,
}

impl std::fmt::Display for EpochLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {} loss {:.6} iou {:.6} precision {:.6} recall {:.6} f1 {:.6}",
            self.epoch, self.loss, self.metrics.iou, self.metrics.precision, self.metrics.recall, self.metrics.f1
        )
    }
}

/// Stacks samples into `[B x 1 x S x S]` images and `[B x S x S]` masks.
pub fn batch_tensors<T: Scalar>(samples: &[&Sample]) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Size("empty batch".into()))?
        .image
        .shape()
        .to_vec();
    let (h, w) = (first[0], first[1]);
    let mut images = Vec::with_capacity(samples.len() * h * w);
    let mut masks = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.image.shape() != first.as_slice() || s.mask.shape() != first.as_slice() {
            return Err(Error::Dimension(format!(
                "sample shapes {:?}/{:?} differ from {first:?}",
                s.image.shape(),
                s.mask.shape()
            )));
        }
        images.extend(s.image.data().iter().map(|&v| T::from_f64(v as f64)));
        masks.extend(s.mask.data().iter().map(|&v| T::from_f64(v as f64)));
    }
    Ok((
        Tensor::new(&[samples.len(), 1, h, w], images)?,
        Tensor::new(&[samples.len(), h, w], masks)?,
    ))
}

const EVAL_BATCH: usize = 64;

/// Heterogeneity probabilities `[S x S]` for every sample, in order.
pub fn predict_samples<T: Scalar>(model: &NetworkModel<T>, samples: &[Sample]) -> Result<Vec<Tensor<T>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, _) = batch_tensors::<T>(&refs)?;
        let p = class_probability(&model.forward(&x)?);
        for i in 0..chunk.len() {
            out.push(p.slice_first(i));
        }
    }
    Ok(out)
}

/// Micro-averaged metrics of the thresholded predictions.
pub fn evaluate_model<T: Scalar>(model: &NetworkModel<T>, samples: &[Sample]) -> Result<MetricsReport> {
    let mut counts = ConfusionCounts::default();
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = batch_tensors::<T>(&refs)?;
        let pred = binarize(&class_probability(&model.forward(&x)?), THRESHOLD);
        counts += ConfusionCounts::from_masks(&pred, &y)?;
    }
    Ok(MetricsReport::from_counts(counts))
}

/// Sample-weighted mean loss without updating anything.
pub fn mean_loss<T: Scalar>(model: &NetworkModel<T>, samples: &[Sample], positive_weight: f64) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_BATCH) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = batch_tensors::<T>(&refs)?;
        let l = cross_entropy_2class(&model.forward(&x)?, &y, T::from_f64(positive_weight))?;
        total += l.loss.as_f64() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Trains with a fresh optimizer, shuffling each epoch with
/// `Prng::derive(seed, epoch)`. `on_epoch` sees every log line and may stop
/// training early.
pub fn train_with<T: Scalar>(
    model: &mut NetworkModel<T>,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Size("training set is empty".into()));
    }
    model.freeze_prefix(config.freeze_prefix)?;
    let mut adam = AdamState::for_model(model, config.learning_rate);
    let weight = T::from_f64(config.positive_weight);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        Prng::derive(config.seed, epoch as u64).shuffle(&mut order);
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let (x, y) = batch_tensors::<T>(&refs)?;
            let (logits, trace) = model.forward_train(&x)?;
            let out = cross_entropy_2class(&logits, &y, weight)?;
            let loss = out.loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b + 1, loss });
            }
            total += loss * idx.len() as f64;
            let grads = model.backward(&trace, &out.grad)?;
            let frozen = model.frozen_flags().to_vec();
            adam.step(model.parameters_mut(), &grads, &frozen)?;
        }
        let held_out = if test.is_empty() { train } else { test };
        let entry = EpochLog {
            epoch,
            loss: total / train.len() as f64,
            metrics: evaluate_model(model, held_out)?,
        };
        log.push(entry);
        if on_epoch(&entry).is_break() {
            break;
        }
    }
    Ok(log)
}

pub fn train<T: Scalar>(
    model: &mut NetworkModel<T>,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    train_with(model, train, test, config, |_| ControlFlow::Continue(()))
}

/// Retrains a loaded model with its first `config.freeze_prefix` layer
/// units fixed. Adam moments start from zero.
pub fn finetune<T: Scalar>(
    model: &mut NetworkModel<T>,
    train: &[Sample],
    test: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    train_with(model, train, test, config, |_| ControlFlow::Continue(()))
}
