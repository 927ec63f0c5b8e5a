//! Slow reference implementations used only by tests and the acceptance
//! harness. Nothing here shares code with the production kernels: every
//! routine walks plain multi-indices over freshly built buffers.

pub mod suites;

use crate::nn::Tensor;

/// Odometer over all multi-indices of `dims`.
pub fn multi_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..total {
        out.push(idx.clone());
        for a in (0..dims.len()).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

fn flat(dims: &[usize], idx: &[usize]) -> usize {
    let mut f = 0;
    for (d, i) in dims.iter().zip(idx) {
        f = f * d + i;
    }
    f
}

/// Direct N-d cross-correlation of a batched `[N, C, s...]` input with a
/// `[O, C, k...]` kernel: zero-pads into a new buffer, then sums taps.
pub fn conv_direct(input: &Tensor, kernel: &Tensor, bias: &[f64], stride: &[usize], padding: &[usize]) -> Tensor {
    let is = input.shape();
    let ks = kernel.shape();
    let sp = ks.len() - 2;
    let (n, c, o) = (is[0], is[1], ks[0]);
    let padded_dims: Vec<usize> = (0..sp).map(|a| is[2 + a] + 2 * padding[a]).collect();
    let mut pshape = vec![n, c];
    pshape.extend(&padded_dims);
    let mut padded = vec![0.0; pshape.iter().product()];
    for idx in multi_indices(is) {
        let mut pidx = idx.clone();
        for a in 0..sp {
            pidx[2 + a] += padding[a];
        }
        padded[flat(&pshape, &pidx)] = input.data()[flat(is, &idx)];
    }
    let out_dims: Vec<usize> = (0..sp)
        .map(|a| (padded_dims[a] - ks[2 + a]) / stride[a] + 1)
        .collect();
    let mut oshape = vec![n, o];
    oshape.extend(&out_dims);
    let mut out = vec![0.0; oshape.iter().product()];
    for oidx in multi_indices(&oshape) {
        let (b, oc) = (oidx[0], oidx[1]);
        let mut acc = bias[oc];
        for ic in 0..c {
            for kidx in multi_indices(&ks[2..]) {
                let mut pidx = vec![b, ic];
                for a in 0..sp {
                    pidx.push(oidx[2 + a] * stride[a] + kidx[a]);
                }
                let mut widx = vec![oc, ic];
                widx.extend(&kidx);
                acc += padded[flat(&pshape, &pidx)] * kernel.data()[flat(ks, &widx)];
            }
        }
        out[flat(&oshape, &oidx)] = acc;
    }
    Tensor::new(oshape, out).expect("oracle shape")
}

/// Direct max pooling over the trailing `sp` axes.
pub fn maxpool_direct(input: &Tensor, sp: usize, window: &[usize], stride: &[usize]) -> Tensor {
    let is = input.shape();
    let lead = is.len() - sp;
    let mut oshape: Vec<usize> = is[..lead].to_vec();
    for a in 0..sp {
        oshape.push((is[lead + a] - window[a]) / stride[a] + 1);
    }
    let mut out = vec![0.0; oshape.iter().product()];
    for oidx in multi_indices(&oshape) {
        let mut best = f64::NEG_INFINITY;
        for widx in multi_indices(window) {
            let mut iidx = oidx[..lead].to_vec();
            for a in 0..sp {
                iidx.push(oidx[lead + a] * stride[a] + widx[a]);
            }
            best = best.max(input.data()[flat(is, &iidx)]);
        }
        out[flat(&oshape, &oidx)] = best;
    }
    Tensor::new(oshape, out).expect("oracle shape")
}

/// Triple-loop `input · weights + bias`.
pub fn dense_direct(input: &Tensor, weights: &Tensor, bias: &[f64]) -> Tensor {
    let (b, n) = (input.shape()[0], input.shape()[1]);
    let m = weights.shape()[1];
    let mut out = vec![0.0; b * m];
    for r in 0..b {
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                acc += input.get(&[r, i]) * weights.get(&[i, j]);
            }
            out[r * m + j] = acc + bias[j];
        }
    }
    Tensor::new(vec![b, m], out).expect("oracle shape")
}

/// `(x − μ_run)/√(σ²_run + ε)·γ + β`, one scalar at a time.
pub fn batchnorm_infer_direct(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
    epsilon: f64,
) -> Tensor {
    let s = input.shape();
    let mut out = input.clone();
    for idx in multi_indices(s) {
        let ch = idx[1];
        let x = input.data()[flat(s, &idx)];
        out.data_mut()[flat(s, &idx)] = (x - mean[ch]) / (var[ch] + epsilon).sqrt() * gamma[ch] + beta[ch];
    }
    out
}

/// Kahan-compensated summation.
fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Softmax probabilities and mean cross-entropy with compensated sums and
/// `ln(Σ exp(z − max))` evaluated per row.
pub fn softmax_ce_direct(logits: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let mut probs = Vec::new();
    let mut nll = Vec::new();
    for (row, &y) in logits.iter().zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = kahan_sum(row.iter().map(|v| (v - m).exp()));
        probs.push(row.iter().map(|v| (v - m).exp() / z).collect());
        nll.push(z.ln() - (row[y] - m));
    }
    (kahan_sum(nll.into_iter()) / labels.len() as f64, probs)
}

/// O(n²) DFT returning `(re, im)` per bin.
pub fn naive_dft(frame: &[f64]) -> Vec<(f64, f64)> {
    let n = frame.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in frame.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                re += x * ang.cos();
                im += x * ang.sin();
            }
            (re, im)
        })
        .collect()
}

/// Voxel coordinates `(channel, x, y, t)` occupied by points `(x, y, t_ms, hover)`:
/// spatial bins `min(⌊v·G⌋, G−1)`, time min-max scaled to the unit interval
/// and binned the same way.
pub fn bin_points(points: &[(f64, f64, f64, bool)], dims: (usize, usize, usize)) -> Vec<(usize, usize, usize, usize)> {
    let t_min = points.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let t_max = points.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let bin = |v: f64, g: usize| -> usize {
        let b = (v * g as f64).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(g - 1)
        }
    };
    let mut cells: Vec<(usize, usize, usize, usize)> = points
        .iter()
        .map(|&(x, y, t, hover)| {
            let tn = if t_max > t_min { (t - t_min) / (t_max - t_min) } else { 0.0 };
            (usize::from(hover), bin(x, dims.0), bin(y, dims.1), bin(tn, dims.2))
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// `exp(Σ wᵢ log(pᵢ + 1e−12) / Σ wᵢ)`, renormalized, straight from the formula.
pub fn fuse_direct(posteriors: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let c = posteriors[0].len();
    let wsum: f64 = weights.iter().sum();
    let raw: Vec<f64> = (0..c)
        .map(|k| {
            let mut s = 0.0;
            for (p, w) in posteriors.iter().zip(weights) {
                s += w * (p[k] + 1e-12).ln();
            }
            (s / wsum).exp()
        })
        .collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|v| v / z).collect()
}

/// Majority-plus-threshold firing rule over `(argmax, max probability)`
/// pairs, oldest first; only the last `k` pairs count.
pub fn smooth_direct(history: &[(usize, f64)], k: usize, threshold: f64, trigger: &[usize]) -> (usize, bool) {
    let window = &history[history.len().saturating_sub(k)..];
    let needed = (k + 1) / 2;
    let mut qualifying = 0;
    for &(label, p) in window {
        if trigger.contains(&label) && p >= threshold {
            qualifying += 1;
        }
    }
    let mut best: Option<(usize, usize, usize)> = None; // (count, last position, label)
    for &(label, _) in window {
        let count = window.iter().filter(|(l, _)| *l == label).count();
        let last = window.iter().rposition(|(l, _)| *l == label).unwrap();
        let cand = (count, last, label);
        if best.is_none_or(|b| (cand.0, cand.1) > (b.0, b.1)) {
            best = Some(cand);
        }
    }
    (best.map(|b| b.2).unwrap_or(0), qualifying >= needed)
}
