use std::collections::BTreeMap;

use super::error::{NnError, Result};
use super::layer::{infer_shapes, LayerSpec};
use super::ops::{self, BnCache, BnMode, RunningStats};
use super::tensor::Tensor;
use crate::rng::Rng;

pub const FORMAT_VERSION: u32 = 1;

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| NnError::StructureMismatch(format!("missing tensor {name:?}")))
    }

    /// Same names in the same order with the same shapes.
    pub fn check_same_structure(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(NnError::StructureMismatch(format!(
                "{} tensors vs {} tensors",
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(NnError::StructureMismatch(format!("name {na:?} vs {nb:?}")));
            }
            if ta.shape() != tb.shape() {
                return Err(NnError::StructureMismatch(format!(
                    "{na}: shape {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Plain gradient descent: `p ← p − lr·g` for every tensor.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, learning_rate: f64) -> Result<()> {
    params.check_same_structure(grads)?;
    for ((_, p), (_, g)) in params.entries.iter_mut().zip(&grads.entries) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= learning_rate * gv;
        }
    }
    Ok(())
}

fn param_name(layer: usize, short: &str) -> String {
    format!("{layer}.{short}")
}

/// Per-layer record kept by the forward pass for the backward pass.
enum Trace {
    Conv { input: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Norm { cache: BnCache },
    Reshape { input_shape: Vec<usize> },
    Dense { input: Tensor },
    Relu { input: Tensor },
    Identity,
}

/// Result of a forward pass up to (not including) the final softmax.
struct ForwardPass {
    logits: Tensor,
    traces: Vec<Trace>,
    state: ParamSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub posterior: Vec<f64>,
}

/// Reverse-mode output of [`Model::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub params: ParamSet,
    /// Gradient of the loss with respect to the input batch.
    pub input: Tensor,
    pub probs: Tensor,
    /// Running statistics after the train-mode forward pass.
    pub state: ParamSet,
}

/// A sequential network with its trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub format_version: u32,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    pub params: ParamSet,
    /// Batch-norm running statistics.
    pub state: ParamSet,
    label_names: Vec<String>,
    rng_seed: u64,
    /// Free-form string metadata (pipeline kind, preprocessing settings).
    pub tags: BTreeMap<String, String>,
    /// Auxiliary tensors carried with the model but not trained by SGD.
    pub aux: ParamSet,
}

impl Model {
    /// Type-checks the layer stack and initializes parameters from `seed`.
    ///
    /// Weights are drawn from `U(−a, a)` with `a = √(6/(fan_in+fan_out))`;
    /// biases and `beta` start at zero, `gamma` at one, running statistics
    /// at mean 0 / variance 1.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, label_names: Vec<String>, seed: u64) -> Result<Self> {
        Self::check_composition(input_shape, &layers, &label_names)?;
        let mut rng = Rng::new(seed);
        let mut params = ParamSet::new();
        let mut state = ParamSet::new();
        for (i, layer) in layers.iter().enumerate() {
            for (short, shape) in layer.param_shapes() {
                let mut t = Tensor::zeros(&shape)?;
                match short {
                    "weight" => {
                        let (fan_in, fan_out) = layer.fans().expect("weighted layer");
                        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        t.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-a, a));
                    }
                    "gamma" => t.data_mut().fill(1.0),
                    _ => {}
                }
                params.insert(param_name(i, short), t);
            }
            for (short, shape) in layer.state_shapes() {
                let fill = if short == "running_var" { 1.0 } else { 0.0 };
                state.insert(param_name(i, short), Tensor::filled(&shape, fill)?);
            }
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            input_shape: input_shape.to_vec(),
            layers,
            params,
            state,
            label_names,
            rng_seed: seed,
            tags: BTreeMap::new(),
            aux: ParamSet::new(),
        })
    }

    /// Reassembles a model from stored parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        params: ParamSet,
        state: ParamSet,
        label_names: Vec<String>,
        rng_seed: u64,
        tags: BTreeMap<String, String>,
        aux: ParamSet,
    ) -> Result<Self> {
        let skeleton = Self::new(&input_shape, layers, label_names, rng_seed)?;
        skeleton.params.check_same_structure(&params)?;
        skeleton.state.check_same_structure(&state)?;
        Ok(Self {
            params,
            state,
            tags,
            aux,
            ..skeleton
        })
    }

    fn check_composition(input_shape: &[usize], layers: &[LayerSpec], labels: &[String]) -> Result<()> {
        let shapes = infer_shapes(input_shape, layers)?;
        let last = layers.len().checked_sub(1);
        for (i, l) in layers.iter().enumerate() {
            if *l == LayerSpec::Softmax && Some(i) != last {
                return Err(NnError::InvalidLayer {
                    index: i,
                    kind: "softmax".into(),
                    reason: "softmax is only allowed as the final layer".into(),
                });
            }
        }
        if layers.last() != Some(&LayerSpec::Softmax) {
            return Err(NnError::InvalidLayer {
                index: layers.len(),
                kind: "softmax".into(),
                reason: "the final layer must be softmax".into(),
            });
        }
        let width = shapes.last().expect("non-empty")[0];
        if width != labels.len() {
            return Err(NnError::ShapeMismatch {
                op: "model",
                axis: "output width vs label count".into(),
                expected: labels.len(),
                found: width,
            });
        }
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. }))
    }

    /// Accepts `[N, ...input_shape]` or a single `input_shape` instance.
    fn as_batch(&self, input: &Tensor) -> Result<Tensor> {
        let s = input.shape();
        if s == self.input_shape.as_slice() {
            let mut shape = vec![1];
            shape.extend_from_slice(s);
            return input.clone().reshape(shape);
        }
        if s.len() == self.input_shape.len() + 1 && s[1..] == self.input_shape[..] {
            return Ok(input.clone());
        }
        Err(NnError::ShapeMismatch {
            op: "model input",
            axis: format!("shape {:?} vs model input {:?}", s, self.input_shape),
            expected: self.input_shape.iter().product(),
            found: input.len(),
        })
    }

    fn running_stats(&self, layer: usize) -> Result<RunningStats> {
        Ok(RunningStats {
            mean: self.state.require(&param_name(layer, "running_mean"))?.data().to_vec(),
            var: self.state.require(&param_name(layer, "running_var"))?.data().to_vec(),
        })
    }

    fn forward(&self, batch: &Tensor, mode: BnMode, keep_traces: bool) -> Result<ForwardPass> {
        let mut x = batch.clone();
        let mut traces = Vec::with_capacity(if keep_traces { self.layers.len() } else { 0 });
        let mut state = self.state.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, trace) = match layer {
                LayerSpec::Conv { stride, padding, .. } => {
                    let w = self.params.require(&param_name(i, "weight"))?;
                    let b = self.params.require(&param_name(i, "bias"))?;
                    let y = ops::conv_forward(&x, w, b.data(), stride, padding)?;
                    (y, Trace::Conv { input: x })
                }
                LayerSpec::MaxPool { dims, window, stride } => {
                    let pooled = ops::maxpool_forward(&x, *dims, window, stride)?;
                    let trace = Trace::Pool {
                        input_shape: x.shape().to_vec(),
                        argmax: pooled.argmax,
                    };
                    (pooled.output, trace)
                }
                LayerSpec::BatchNorm { epsilon, momentum, .. } => {
                    let gamma = self.params.require(&param_name(i, "gamma"))?;
                    let beta = self.params.require(&param_name(i, "beta"))?;
                    let running = self.running_stats(i)?;
                    let out =
                        ops::batchnorm_forward(&x, gamma.data(), beta.data(), *epsilon, *momentum, mode, Some(&running))?;
                    if let Some(updated) = out.updated {
                        state.insert(param_name(i, "running_mean"), Tensor::from_vec(updated.mean)?);
                        state.insert(param_name(i, "running_var"), Tensor::from_vec(updated.var)?);
                    }
                    let trace = match out.cache {
                        Some(cache) => Trace::Norm { cache },
                        None => Trace::Identity,
                    };
                    (out.output, trace)
                }
                LayerSpec::Flatten => {
                    let shape = x.shape().to_vec();
                    let n = shape[0];
                    let flat = x.len() / n;
                    (x.reshape(vec![n, flat])?, Trace::Reshape { input_shape: shape })
                }
                LayerSpec::Dense { .. } => {
                    let w = self.params.require(&param_name(i, "weight"))?;
                    let b = self.params.require(&param_name(i, "bias"))?;
                    let y = ops::dense_forward(&x, w, b.data())?;
                    (y, Trace::Dense { input: x })
                }
                LayerSpec::ReLU => {
                    let y = ops::relu_forward(&x);
                    (y, Trace::Relu { input: x })
                }
                // The final softmax is applied by the callers, fused with the loss.
                LayerSpec::Softmax => (x, Trace::Identity),
            };
            if keep_traces {
                traces.push(trace);
            }
            x = next;
        }
        Ok(ForwardPass {
            logits: x,
            traces,
            state,
        })
    }

    /// Pre-softmax outputs in inference mode.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        let batch = self.as_batch(input)?;
        Ok(self.forward(&batch, BnMode::Infer, false)?.logits)
    }

    /// Class posteriors, one row per instance.
    pub fn posteriors(&self, input: &Tensor) -> Result<Tensor> {
        ops::softmax_rows(&self.logits(input)?)
    }

    /// Argmax label (ties to the lowest class index) with the full posterior,
    /// for a single instance or every instance of a batch.
    pub fn predict(&self, input: &Tensor) -> Result<Vec<Prediction>> {
        let probs = self.posteriors(input)?;
        let c = self.num_classes();
        Ok(probs
            .data()
            .chunks(c)
            .map(|row| {
                let index = argmax(row);
                Prediction {
                    index,
                    label: self.label_names[index].clone(),
                    posterior: row.to_vec(),
                }
            })
            .collect())
    }

    pub fn predict_one(&self, input: &Tensor) -> Result<Prediction> {
        let mut preds = self.predict(input)?;
        if preds.len() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "predict_one",
                axis: "batch size".into(),
                expected: 1,
                found: preds.len(),
            });
        }
        Ok(preds.remove(0))
    }

    /// Train-mode loss only (used by finite-difference checks).
    pub fn loss(&self, batch: &Tensor, labels: &[usize]) -> Result<f64> {
        let batch = self.as_batch(batch)?;
        let pass = self.forward(&batch, BnMode::Train, false)?;
        Ok(ops::softmax_cross_entropy_weighted(&pass.logits, labels, None)?.loss)
    }

    /// Exact gradients of the mean cross-entropy loss for every parameter
    /// and for the input batch.
    pub fn backward(&self, batch: &Tensor, labels: &[usize]) -> Result<Gradients> {
        self.backward_weighted(batch, labels, None)
    }

    pub fn backward_weighted(&self, batch: &Tensor, labels: &[usize], weights: Option<&[f64]>) -> Result<Gradients> {
        let batch = self.as_batch(batch)?;
        let pass = self.forward(&batch, BnMode::Train, true)?;
        let sl = ops::softmax_cross_entropy_weighted(&pass.logits, labels, weights)?;
        let mut grad = sl.grad_logits;
        let mut grads: Vec<(String, Tensor)> = Vec::new();
        for (i, (layer, trace)) in self.layers.iter().zip(&pass.traces).enumerate().rev() {
            grad = match (layer, trace) {
                (LayerSpec::Conv { stride, padding, .. }, Trace::Conv { input }) => {
                    let w = self.params.require(&param_name(i, "weight"))?;
                    let g = ops::conv_backward(input, w, &grad, stride, padding)?;
                    grads.push((param_name(i, "bias"), Tensor::from_vec(g.bias)?));
                    grads.push((param_name(i, "weight"), g.kernel));
                    g.input
                }
                (LayerSpec::MaxPool { .. }, Trace::Pool { input_shape, argmax }) => {
                    ops::maxpool_backward(input_shape, argmax, &grad)?
                }
                (LayerSpec::BatchNorm { .. }, Trace::Norm { cache }) => {
                    let gamma = self.params.require(&param_name(i, "gamma"))?;
                    let g = ops::batchnorm_backward(cache, gamma.data(), &grad)?;
                    grads.push((param_name(i, "beta"), Tensor::from_vec(g.beta)?));
                    grads.push((param_name(i, "gamma"), Tensor::from_vec(g.gamma)?));
                    g.input
                }
                (LayerSpec::Flatten, Trace::Reshape { input_shape }) => grad.reshape(input_shape.clone())?,
                (LayerSpec::Dense { .. }, Trace::Dense { input }) => {
                    let w = self.params.require(&param_name(i, "weight"))?;
                    let g = ops::dense_backward(input, w, &grad)?;
                    grads.push((param_name(i, "bias"), Tensor::from_vec(g.bias)?));
                    grads.push((param_name(i, "weight"), g.weights));
                    g.input
                }
                (LayerSpec::ReLU, Trace::Relu { input }) => ops::relu_backward(input, &grad),
                (LayerSpec::Softmax, Trace::Identity) => grad,
                (l, _) => {
                    return Err(NnError::StructureMismatch(format!(
                        "layer {i} ({}) has no matching forward record",
                        l.kind()
                    )))
                }
            };
        }
        // Reorder to the declaration order of `params`.
        let mut out = ParamSet::new();
        for (name, _) in self.params.iter() {
            let t = grads
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| NnError::StructureMismatch(format!("no gradient for {name}")))?;
            out.insert(name, t);
        }
        Ok(Gradients {
            loss: sl.loss,
            params: out,
            input: grad,
            probs: sl.probs,
            state: pass.state,
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn construction_checks_the_head() {
        let no_softmax = vec![LayerSpec::dense(4, 2)];
        assert!(Model::new(&[4], no_softmax, labels(2), 0).is_err());
        let wrong_width = vec![LayerSpec::dense(4, 3), LayerSpec::Softmax];
        assert!(Model::new(&[4], wrong_width, labels(2), 0).is_err());
        let early_softmax = vec![LayerSpec::Softmax, LayerSpec::dense(4, 2), LayerSpec::Softmax];
        assert!(Model::new(&[4], early_softmax, labels(2), 0).is_err());
        let ok = vec![LayerSpec::dense(4, 2), LayerSpec::Softmax];
        let m = Model::new(&[4], ok, labels(2), 0).unwrap();
        assert_eq!(m.params.scalar_count(), 10);
    }

    #[test]
    fn glorot_bounds_hold() {
        let m = Model::new(&[20], vec![LayerSpec::dense(20, 10), LayerSpec::Softmax], labels(10), 5).unwrap();
        let a = (6.0f64 / 30.0).sqrt();
        let w = m.params.get("0.weight").unwrap();
        assert!(w.data().iter().all(|v| v.abs() <= a));
        assert!(m.params.get("0.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weight_dense_bias_gradient_closed_form() {
        let mut m = Model::new(&[3], vec![LayerSpec::dense(3, 2), LayerSpec::Softmax], labels(2), 1).unwrap();
        m.params.get_mut("0.weight").unwrap().data_mut().fill(0.0);
        let batch = Tensor::new(vec![4, 3], (0..12).map(|v| v as f64 - 5.0).collect()).unwrap();
        let g = m.backward(&batch, &[0, 1, 0, 1]).unwrap();
        // uniform softmax minus one-hot, averaged: (0.5-1 + 0.5 + 0.5-1 + 0.5) / 4 = 0
        let db = g.params.get("0.bias").unwrap();
        assert!(db.data().iter().all(|v| v.abs() < 1e-15));
        let g = m.backward(&batch, &[0, 0, 0, 1]).unwrap();
        let db = g.params.get("0.bias").unwrap().data().to_vec();
        assert!((db[0] - (0.5 - 0.75)).abs() < 1e-15);
        assert!((db[1] - (0.5 - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn sgd_examples() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(vec![1.0]).unwrap());
        let mut g = ParamSet::new();
        g.insert("w", Tensor::from_vec(vec![2.0]).unwrap());
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!((p.get("w").unwrap().data()[0] - 0.8).abs() < 1e-15);
        let before = p.clone();
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, before);
        g.get_mut("w").unwrap().data_mut()[0] = 0.0;
        sgd_step(&mut p, &g, 0.5).unwrap();
        assert_eq!(p, before);
        let mut other = ParamSet::new();
        other.insert("v", Tensor::from_vec(vec![0.0]).unwrap());
        assert!(sgd_step(&mut p, &other, 0.1).is_err());
    }

    #[test]
    fn maxpool_masked_inputs_get_zero_gradient() {
        let layers = vec![
            LayerSpec::max_pool(1, 2),
            LayerSpec::Flatten,
            LayerSpec::dense(2, 2),
            LayerSpec::Softmax,
        ];
        let m = Model::new(&[1, 4], layers, labels(2), 3).unwrap();
        let x = Tensor::new(vec![1, 1, 4], vec![0.1, 0.9, 0.7, -0.3]).unwrap();
        let g = m.backward(&x, &[1]).unwrap();
        let dx = g.input.data();
        assert_eq!(dx[0], 0.0);
        assert_eq!(dx[3], 0.0);
        assert!(dx[1] != 0.0 && dx[2] != 0.0);
    }

    #[test]
    fn predict_rejects_wrong_shape() {
        let m = Model::new(&[3], vec![LayerSpec::dense(3, 2), LayerSpec::Softmax], labels(2), 1).unwrap();
        assert!(m.predict(&Tensor::zeros(&[4]).unwrap()).is_err());
        assert_eq!(m.predict(&Tensor::zeros(&[5, 3]).unwrap()).unwrap().len(), 5);
    }
}
