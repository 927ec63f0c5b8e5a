//! Randomized comparisons of the production kernels against the reference
//! implementations, shared by the unit tests and the acceptance harness.

use super::{batchnorm_infer_direct, conv_direct, dense_direct, maxpool_direct};
use crate::nn::gradcheck::check_gradients;
use crate::nn::{batchnorm_forward, conv_forward, dense_forward, maxpool_forward, BnMode, LayerSpec, Model, RunningStats, Tensor};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteResult {
    pub cases: usize,
    /// Largest absolute (or, for gradients, relative) deviation seen.
    pub max_error: f64,
}

fn random_tensor(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap()
}

fn pick(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape disagreement");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random batched convolutions with `spatial` axes.
pub fn conv_suite(spatial: usize, cases: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::derive(seed, spatial as u64);
    let max_extent = [0, 12, 7, 5][spatial];
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let n = pick(&mut rng, 1, 2);
        let c = pick(&mut rng, 1, 3);
        let o = pick(&mut rng, 1, 3);
        let mut ishape = vec![n, c];
        let mut kshape = vec![o, c];
        let mut stride = Vec::new();
        let mut padding = Vec::new();
        for _ in 0..spatial {
            let size = pick(&mut rng, 1, max_extent);
            let pad = pick(&mut rng, 0, 1);
            let k = pick(&mut rng, 1, (size + 2 * pad).min(4));
            ishape.push(size);
            kshape.push(k);
            padding.push(pad);
            stride.push(pick(&mut rng, 1, 2));
        }
        let x = random_tensor(&mut rng, &ishape);
        let w = random_tensor(&mut rng, &kshape);
        let bias: Vec<f64> = (0..o).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let got = conv_forward(&x, &w, &bias, &stride, &padding).expect("valid conv case");
        let want = conv_direct(&x, &w, &bias, &stride, &padding);
        max_error = max_error.max(max_abs_diff(&got, &want));
    }
    SuiteResult { cases, max_error }
}

pub fn maxpool_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::derive(seed, 10);
    let mut max_error = 0.0f64;
    for i in 0..cases {
        let spatial = 1 + i % 3;
        let mut shape = vec![pick(&mut rng, 1, 2), pick(&mut rng, 1, 3)];
        let mut window = Vec::new();
        let mut stride = Vec::new();
        for _ in 0..spatial {
            let size = pick(&mut rng, 1, [0, 12, 7, 5][spatial]);
            shape.push(size);
            window.push(pick(&mut rng, 1, size.min(3)));
            stride.push(pick(&mut rng, 1, 3));
        }
        let x = random_tensor(&mut rng, &shape);
        let got = maxpool_forward(&x, spatial, &window, &stride).expect("valid pool case");
        let want = maxpool_direct(&x, spatial, &window, &stride);
        max_error = max_error.max(max_abs_diff(&got.output, &want));
    }
    SuiteResult { cases, max_error }
}

pub fn dense_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::derive(seed, 20);
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let (b, n, m) = (pick(&mut rng, 1, 5), pick(&mut rng, 1, 20), pick(&mut rng, 1, 10));
        let x = random_tensor(&mut rng, &[b, n]);
        let w = random_tensor(&mut rng, &[n, m]);
        let bias: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let got = dense_forward(&x, &w, &bias).unwrap();
        max_error = max_error.max(max_abs_diff(&got, &dense_direct(&x, &w, &bias)));
    }
    SuiteResult { cases, max_error }
}

/// Inference-mode batch normalization against the scalar formula.
pub fn batchnorm_suite(cases: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::derive(seed, 30);
    let mut max_error = 0.0f64;
    for _ in 0..cases {
        let c = pick(&mut rng, 1, 4);
        let mut shape = vec![pick(&mut rng, 1, 4), c];
        for _ in 0..pick(&mut rng, 0, 3) {
            shape.push(pick(&mut rng, 1, 5));
        }
        let x = random_tensor(&mut rng, &shape);
        let gamma: Vec<f64> = (0..c).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let beta: Vec<f64> = (0..c).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let stats = RunningStats {
            mean: (0..c).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            var: (0..c).map(|_| rng.uniform(0.1, 3.0)).collect(),
        };
        let eps = 1e-5;
        let got = batchnorm_forward(&x, &gamma, &beta, eps, 0.9, BnMode::Infer, Some(&stats)).unwrap();
        let want = batchnorm_infer_direct(&x, &gamma, &beta, &stats.mean, &stats.var, eps);
        max_error = max_error.max(max_abs_diff(&got.output, &want));
    }
    SuiteResult { cases, max_error }
}

/// A random network `conv → batchnorm → relu → maxpool → flatten → dense →
/// relu → dense → softmax` with `spatial` conv axes and at most 1000
/// parameters, plus a random batch and labels.
pub fn random_network(spatial: usize, rng: &mut Rng) -> (Model, Tensor, Vec<usize>) {
    loop {
        let c = pick(rng, 1, 2);
        let o = pick(rng, 2, 3);
        let mut input = vec![c];
        for _ in 0..spatial {
            input.push(pick(rng, [0, 6, 4, 3][spatial], [0, 9, 6, 4][spatial]));
        }
        let k = pick(rng, 2, 3);
        let pad = pick(rng, 0, 1);
        let hidden = pick(rng, 3, 5);
        let classes = pick(rng, 2, 3);
        let conv_out: Vec<usize> = input[1..].iter().map(|&s| s + 2 * pad - k + 1).collect();
        let pool = if conv_out.iter().all(|&s| s >= 2) { 2 } else { 1 };
        let flat: usize = o * conv_out.iter().map(|&s| (s - pool) / pool + 1).product::<usize>();
        let layers = vec![
            LayerSpec::conv(spatial, c, o, k, pad),
            LayerSpec::batch_norm(o),
            LayerSpec::ReLU,
            LayerSpec::max_pool(spatial, pool),
            LayerSpec::Flatten,
            LayerSpec::dense(flat, hidden),
            LayerSpec::ReLU,
            LayerSpec::dense(hidden, classes),
            LayerSpec::Softmax,
        ];
        let labels: Vec<String> = (0..classes).map(|i| format!("class{i}")).collect();
        let Ok(mut model) = Model::new(&input, layers, labels, rng.next_u64()) else {
            continue;
        };
        if model.params.scalar_count() > 1000 {
            continue;
        }
        for (name, t) in model.params.iter_mut() {
            if name.ends_with("gamma") || name.ends_with("beta") || name.ends_with("bias") {
                t.data_mut().iter_mut().for_each(|v| *v += rng.uniform(-0.5, 0.5));
            }
        }
        let batch_size = 3;
        let mut shape = vec![batch_size];
        shape.extend(&input);
        let batch = random_tensor(rng, &shape);
        let targets = (0..batch_size).map(|_| rng.below(classes)).collect();
        return (model, batch, targets);
    }
}

/// Worst relative error of analytic vs central-difference gradients over
/// `networks` random networks (cycling 1-D, 2-D, 3-D convolutions).
pub fn gradient_suite(networks: usize, seed: u64, h: f64) -> SuiteResult {
    let mut rng = Rng::derive(seed, 40);
    let mut max_error = 0.0f64;
    for i in 0..networks {
        let (model, batch, labels) = random_network(1 + i % 3, &mut rng);
        let report = check_gradients(&model, &batch, &labels, h).expect("gradient check runs");
        max_error = max_error.max(report.max_relative_error);
    }
    SuiteResult {
        cases: networks,
        max_error,
    }
}
