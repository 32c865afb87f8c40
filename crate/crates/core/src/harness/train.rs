//! Minibatch SGD with momentum, weight decay, global-norm clipping and a
//! per-step cosine learning-rate schedule.

use std::f64::consts::PI;

use crate::data::{BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::nn::{ModelSpec, ParamSet};
use crate::tensor::{DType, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip: Option<f64>,
    pub seed: u64,
    pub dtype: DType,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip: Some(1.0),
            seed: 0,
            dtype: DType::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("need lr >= 0, momentum in [0, 1), weight decay >= 0".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Learning rate at step `t` of `total`: lr · (1 + cos(π t / total)) / 2.
    pub fn lr_at(&self, t: usize, total: usize) -> f64 {
        self.lr * (1.0 + (PI * t as f64 / total as f64).cos()) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Mean minibatch loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Fraction of samples whose largest logit is the label.
pub fn accuracy(spec: &ModelSpec, params: &ParamSet, data: &Dataset) -> Result<f64> {
    let tensors = params.tensors();
    let dtype = tensors.first().map_or(DType::F64, Tensor::dtype);
    let mut correct = 0;
    let chunk = 500;
    let mut start = 0;
    while start < data.len() {
        let end = (start + chunk).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let batch = data.batch(&idx)?;
        let inputs = batch.inputs.cast(dtype);
        let logits = spec.forward(&tensors, &inputs)?;
        let c = logits.shape()[1];
        for (row, &label) in logits.data().chunks_exact(c).zip(&batch.labels) {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            if best.0 == label {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(correct as f64 / data.len() as f64)
}

pub fn train(
    spec: &ModelSpec,
    params: &ParamSet,
    data: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let dtype = config.dtype;
    let data = data.cast(dtype);
    let mut values: Vec<Vec<f64>> = params.tensors().iter().map(|t| t.cast(dtype).to_vec()).collect();
    let shapes: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
    let mut velocity: Vec<Vec<f64>> = values.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut it = BatchIterator::new(&data, config.batch_size, config.seed)?;
    let steps_per_epoch = it.batches_per_epoch();
    let total = steps_per_epoch * config.epochs;
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let idx = it.next_indices().to_vec();
            let batch = data.batch(&idx)?;
            let tape = Tape::new();
            let leaves: Vec<Tensor> = values
                .iter()
                .zip(&shapes)
                .map(|(v, s)| Ok(tape.leaf(&Tensor::with_dtype(s, v.clone(), dtype)?)))
                .collect::<Result<_>>()?;
            let loss = spec.loss(&leaves, &batch.inputs, &batch.labels)?;
            let lv = loss.item()?;
            if !lv.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += lv;
            let grads = Tape::backward(&loss, &leaves, false)?;
            let mut g: Vec<Vec<f64>> = grads
                .iter()
                .zip(&values)
                .map(|(g, w)| g.data().iter().zip(w).map(|(gi, wi)| gi + config.weight_decay * wi).collect())
                .collect();
            if let Some(max) = config.clip {
                let norm = g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
                if norm > max {
                    let s = max / norm;
                    g.iter_mut().flatten().for_each(|v| *v *= s);
                }
            }
            let lr = config.lr_at(step, total);
            for ((w, v), g) in values.iter_mut().zip(&mut velocity).zip(&g) {
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = dtype.round(config.momentum * *vi + gi);
                    *wi = dtype.round(*wi - lr * *vi);
                }
            }
            step += 1;
        }
        epoch_loss.push(loss_sum / steps_per_epoch as f64);
    }
    let tensors = values
        .into_iter()
        .zip(&shapes)
        .map(|(v, s)| Tensor::with_dtype(s, v, dtype))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let trained = params.with_tensors(tensors)?;
    let train_accuracy = accuracy(spec, &trained, &data)?;
    let test_accuracy = match test {
        Some(t) => Some(accuracy(spec, &trained, &t.cast(dtype))?),
        None => None,
    };
    Ok(TrainOutcome { params: trained, epoch_loss, train_accuracy, test_accuracy })
}
