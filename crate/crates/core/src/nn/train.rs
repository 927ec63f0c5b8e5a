use super::error::{NnError, Result};
use super::model::{argmax, sgd_step, Model};
use super::ops;
use super::tensor::Tensor;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Fraction of the (seed-shuffled) data held out for per-epoch validation.
    pub validation_split: Option<f64>,
    /// Inverse-frequency sample weighting in the loss.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            shuffle: true,
            validation_split: None,
            class_weighting: false,
        }
    }
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            learning_rate,
            batch_size,
            epochs,
            seed,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NnError::InvalidConfig("epochs must be >= 1".into()));
        }
        if let Some(f) = self.validation_split {
            if !(0.0..1.0).contains(&f) {
                return Err(NnError::InvalidConfig(format!(
                    "validation_split must lie in [0, 1), got {f}"
                )));
            }
        }
        Ok(())
    }
}

/// Instance tensors (without batch axis) with class indices.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(NnError::ShapeMismatch {
                op: "dataset",
                axis: "inputs vs labels".into(),
                expected: inputs.len(),
                found: labels.len(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let refs: Vec<&Tensor> = indices.iter().map(|&i| &self.inputs[i]).collect();
        Ok((Tensor::stack(&refs)?, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (weighted by batch size).
    pub loss: f64,
    /// Training accuracy of the in-pass predictions.
    pub accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
}

/// Loss and accuracy of `model` on `indices` of `data`, in inference mode.
pub fn evaluate(model: &Model, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(64) {
        let (batch, labels) = data.batch(chunk)?;
        let logits = model.logits(&batch)?;
        let (l, probs) = ops::softmax_cross_entropy(&logits, &labels)?;
        loss += l * chunk.len() as f64;
        let c = model.num_classes();
        correct += probs
            .data()
            .chunks(c)
            .zip(&labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
    }
    Ok((loss / indices.len() as f64, correct as f64 / indices.len() as f64))
}

fn class_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (present as f64 * c as f64) })
        .collect()
}

/// Mini-batch SGD on the mean cross-entropy loss.
///
/// Deterministic in `config.seed`: the validation hold-out and every
/// epoch's shuffle come from one seeded generator. When the model has
/// batch normalization, a trailing batch of one sample is merged into the
/// previous batch.
pub fn train(mut model: Model, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let classes = model.num_classes();
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::LabelOutOfRange { label: bad, classes });
    }
    let mut rng = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut val: Vec<usize> = Vec::new();
    if let Some(f) = config.validation_split.filter(|&f| f > 0.0) {
        rng.shuffle(&mut order);
        let n_val = ((data.len() as f64 * f).floor() as usize).min(data.len() - 1);
        val = order.split_off(data.len() - n_val);
    }
    let weights = config.class_weighting.then(|| class_weights(&data.labels, classes));
    let merge_singletons = model.has_batch_norm();

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            rng.shuffle(&mut order);
        }
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if merge_singletons && batches.len() > 1 && batches.last().map(|b| b.len()) == Some(1) {
            batches.pop();
            let start = order.len() - batches.last().unwrap().len() - 1;
            *batches.last_mut().unwrap() = &order[start..];
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, idx) in batches.iter().enumerate() {
            let (batch, labels) = data.batch(idx)?;
            let w: Option<Vec<f64>> = weights
                .as_ref()
                .map(|cw| labels.iter().map(|&l| cw[l]).collect());
            let grads = model.backward_weighted(&batch, &labels, w.as_deref())?;
            if !grads.loss.is_finite() {
                return Err(NnError::NonFiniteLoss { epoch, batch: bi + 1 });
            }
            loss_sum += grads.loss * idx.len() as f64;
            correct += grads
                .probs
                .data()
                .chunks(classes)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            sgd_step(&mut model.params, &grads.params, config.learning_rate)?;
            model.state = grads.state;
        }
        let (val_loss, val_accuracy) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, data, &val)?;
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch,
            loss: loss_sum / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
            val_loss,
            val_accuracy,
        };
        log::debug!("epoch {epoch}: loss {:.6} accuracy {:.4}", stats.loss, stats.accuracy);
        history.push(stats);
    }
    Ok(TrainOutcome { model, history })
}
