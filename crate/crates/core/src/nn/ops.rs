//! Forward and backward kernels for every layer kind.
//!
//! All spatial operators run on a normalized three-axis geometry: a 1-D
//! signal `W` is treated as `1×1×W` and a 2-D image `H×W` as `1×H×W`, so
//! conv and pooling share a single loop nest for every dimensionality.
//! Layout is channels-first and row-major throughout.

use super::error::{NnError, Result};
use super::tensor::Tensor;

/// Per-axis hyperparameter on the normalized three-axis geometry.
type Axes = [usize; 3];

fn lift(values: &[usize], spatial: usize, fill: usize, name: &'static str) -> Result<Axes> {
    let mut out = [fill; 3];
    let src: Vec<usize> = match values.len() {
        1 => vec![values[0]; spatial],
        n if n == spatial => values.to_vec(),
        n => {
            return Err(NnError::ShapeMismatch {
                op: name,
                axis: "hyperparameter length".into(),
                expected: spatial,
                found: n,
            })
        }
    };
    out[3 - spatial..].copy_from_slice(&src);
    Ok(out)
}

fn out_len(
    op: &'static str,
    axis: usize,
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize> {
    let span = input + 2 * padding;
    if stride == 0 || kernel == 0 || span < kernel {
        return Err(NnError::NonPositiveOutput {
            op,
            axis,
            input,
            kernel,
            stride,
            padding,
        });
    }
    Ok((span - kernel) / stride + 1)
}

/// Resolved geometry of a convolution call.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub spatial_rank: usize,
    pub input: Axes,
    pub kernel: Axes,
    pub stride: Axes,
    pub padding: Axes,
    pub output: Axes,
    batched: bool,
}

impl ConvGeometry {
    pub fn resolve(input: &Tensor, kernel: &Tensor, stride: &[usize], padding: &[usize]) -> Result<Self> {
        let kr = kernel.rank();
        if !(3..=5).contains(&kr) {
            return Err(NnError::RankMismatch {
                op: "conv",
                expected: "kernel rank 3..=5 (out, in, k...)".into(),
                found: kr,
            });
        }
        let spatial = kr - 2;
        let (batched, batch, ishape) = if input.rank() == spatial + 2 {
            (true, input.shape()[0], &input.shape()[1..])
        } else if input.rank() == spatial + 1 {
            (false, 1, input.shape())
        } else {
            return Err(NnError::RankMismatch {
                op: "conv",
                expected: format!("{} (batched) or {} (single)", spatial + 2, spatial + 1),
                found: input.rank(),
            });
        };
        let ks = kernel.shape();
        if ishape[0] != ks[1] {
            return Err(NnError::ShapeMismatch {
                op: "conv",
                axis: "input channels".into(),
                expected: ks[1],
                found: ishape[0],
            });
        }
        let inp = lift(&ishape[1..], spatial, 1, "conv")?;
        let k = lift(&ks[2..], spatial, 1, "conv")?;
        let s = lift(stride, spatial, 1, "conv stride")?;
        let p = lift(padding, spatial, 0, "conv padding")?;
        let mut output = [1; 3];
        for a in 0..3 {
            let axis = (a + spatial).saturating_sub(3);
            output[a] = out_len("conv", axis, inp[a], k[a], s[a], p[a])?;
        }
        Ok(Self {
            batch,
            in_channels: ks[1],
            out_channels: ks[0],
            spatial_rank: spatial,
            input: inp,
            kernel: k,
            stride: s,
            padding: p,
            output,
            batched,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = Vec::with_capacity(self.spatial_rank + 2);
        if self.batched {
            shape.push(self.batch);
        }
        shape.push(self.out_channels);
        shape.extend_from_slice(&self.output[3 - self.spatial_rank..]);
        shape
    }

    pub fn input_shape(&self) -> Vec<usize> {
        let mut shape = Vec::with_capacity(self.spatial_rank + 2);
        if self.batched {
            shape.push(self.batch);
        }
        shape.push(self.in_channels);
        shape.extend_from_slice(&self.input[3 - self.spatial_rank..]);
        shape
    }
}

/// Valid kernel offsets `k` for output position `o`: `0 <= o*s + k - p < len`.
#[inline]
fn kernel_range(o: usize, s: usize, p: usize, k: usize, len: usize) -> (usize, usize) {
    let start = o * s;
    let lo = p.saturating_sub(start);
    let hi = (len + p).saturating_sub(start).min(k);
    (lo, hi.max(lo))
}

/// Cross-correlation (no kernel flip) plus a per-output-channel bias.
pub fn conv_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f64],
    stride: &[usize],
    padding: &[usize],
) -> Result<Tensor> {
    let g = ConvGeometry::resolve(input, kernel, stride, padding)?;
    if bias.len() != g.out_channels {
        return Err(NnError::ShapeMismatch {
            op: "conv",
            axis: "bias length".into(),
            expected: g.out_channels,
            found: bias.len(),
        });
    }
    let x = input.data();
    let w = kernel.data();
    let [i0, i1, i2] = g.input;
    let [k0, k1, k2] = g.kernel;
    let [s0, s1, s2] = g.stride;
    let [p0, p1, p2] = g.padding;
    let [o0, o1, o2] = g.output;
    let c = g.in_channels;
    let mut out = vec![0.0; g.batch * g.out_channels * o0 * o1 * o2];
    let mut idx = 0;
    for b in 0..g.batch {
        for oc in 0..g.out_channels {
            for od in 0..o0 {
                let (kd_lo, kd_hi) = kernel_range(od, s0, p0, k0, i0);
                for oh in 0..o1 {
                    let (kh_lo, kh_hi) = kernel_range(oh, s1, p1, k1, i1);
                    for ow in 0..o2 {
                        let (kw_lo, kw_hi) = kernel_range(ow, s2, p2, k2, i2);
                        let mut acc = bias[oc];
                        for ic in 0..c {
                            let xc = (b * c + ic) * i0;
                            let wc = (oc * c + ic) * k0;
                            for kd in kd_lo..kd_hi {
                                let id = od * s0 + kd - p0;
                                for kh in kh_lo..kh_hi {
                                    let ih = oh * s1 + kh - p1;
                                    let xs = ((xc + id) * i1 + ih) * i2 + ow * s2 + kw_lo - p2;
                                    let ws = ((wc + kd) * k1 + kh) * k2 + kw_lo;
                                    let span = kw_hi - kw_lo;
                                    for (xv, wv) in x[xs..xs + span].iter().zip(&w[ws..ws + span]) {
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        out[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    Tensor::new(g.output_shape(), out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

/// Gradients of a convolution given the upstream gradient `grad_out`.
pub fn conv_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: &[usize],
    padding: &[usize],
) -> Result<ConvGrads> {
    let g = ConvGeometry::resolve(input, kernel, stride, padding)?;
    if grad_out.shape() != g.output_shape().as_slice() {
        return Err(NnError::ShapeMismatch {
            op: "conv backward",
            axis: "upstream gradient".into(),
            expected: g.output_shape().iter().product(),
            found: grad_out.len(),
        });
    }
    let x = input.data();
    let w = kernel.data();
    let dy = grad_out.data();
    let [i0, i1, i2] = g.input;
    let [k0, k1, k2] = g.kernel;
    let [s0, s1, s2] = g.stride;
    let [p0, p1, p2] = g.padding;
    let [o0, o1, o2] = g.output;
    let c = g.in_channels;
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; g.out_channels];
    let mut idx = 0;
    for b in 0..g.batch {
        for oc in 0..g.out_channels {
            for od in 0..o0 {
                let (kd_lo, kd_hi) = kernel_range(od, s0, p0, k0, i0);
                for oh in 0..o1 {
                    let (kh_lo, kh_hi) = kernel_range(oh, s1, p1, k1, i1);
                    for ow in 0..o2 {
                        let (kw_lo, kw_hi) = kernel_range(ow, s2, p2, k2, i2);
                        let gy = dy[idx];
                        idx += 1;
                        if gy == 0.0 {
                            continue;
                        }
                        db[oc] += gy;
                        for ic in 0..c {
                            let xc = (b * c + ic) * i0;
                            let wc = (oc * c + ic) * k0;
                            for kd in kd_lo..kd_hi {
                                let id = od * s0 + kd - p0;
                                for kh in kh_lo..kh_hi {
                                    let ih = oh * s1 + kh - p1;
                                    let xs = ((xc + id) * i1 + ih) * i2 + ow * s2 + kw_lo - p2;
                                    let ws = ((wc + kd) * k1 + kh) * k2 + kw_lo;
                                    for j in 0..kw_hi - kw_lo {
                                        dw[ws + j] += gy * x[xs + j];
                                        dx[xs + j] += gy * w[ws + j];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        kernel: Tensor::new(kernel.shape().to_vec(), dw)?,
        bias: db,
    })
}

/// Output of max pooling: the pooled tensor plus, for every output cell, the
/// flat input index that supplied its maximum.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Max pooling over the trailing `spatial_rank` axes of a `[N, C, ...]` tensor
/// (or `[C, ...]` for a single instance). No padding; ties go to the lowest
/// flat index.
pub fn maxpool_forward(
    input: &Tensor,
    spatial_rank: usize,
    window: &[usize],
    stride: &[usize],
) -> Result<Pooled> {
    if !(1..=3).contains(&spatial_rank) || input.rank() < spatial_rank + 1 || input.rank() > spatial_rank + 2 {
        return Err(NnError::RankMismatch {
            op: "maxpool",
            expected: format!("{} or {}", spatial_rank + 1, spatial_rank + 2),
            found: input.rank(),
        });
    }
    let shape = input.shape();
    let split = shape.len() - spatial_rank;
    let planes: usize = shape[..split].iter().product();
    let inp = lift(&shape[split..], spatial_rank, 1, "maxpool")?;
    let win = lift(window, spatial_rank, 1, "maxpool window")?;
    let st = lift(stride, spatial_rank, 1, "maxpool stride")?;
    let mut outd = [1; 3];
    for a in 0..3 {
        outd[a] = out_len("maxpool", (a + spatial_rank).saturating_sub(3), inp[a], win[a], st[a], 0)?;
    }
    let [i0, i1, i2] = inp;
    let [o0, o1, o2] = outd;
    let plane_in = i0 * i1 * i2;
    let x = input.data();
    let mut out = Vec::with_capacity(planes * o0 * o1 * o2);
    let mut argmax = Vec::with_capacity(out.capacity());
    for pl in 0..planes {
        let base = pl * plane_in;
        for od in 0..o0 {
            for oh in 0..o1 {
                for ow in 0..o2 {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = usize::MAX;
                    for wd in 0..win[0] {
                        for wh in 0..win[1] {
                            let row = base + ((od * st[0] + wd) * i1 + oh * st[1] + wh) * i2 + ow * st[2];
                            for ww in 0..win[2] {
                                let v = x[row + ww];
                                if v > best || best_idx == usize::MAX {
                                    best = v;
                                    best_idx = row + ww;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
    }
    let mut oshape = shape[..split].to_vec();
    oshape.extend_from_slice(&outd[3 - spatial_rank..]);
    Ok(Pooled {
        output: Tensor::new(oshape, out)?,
        argmax,
    })
}

/// Routes each upstream gradient to the recorded argmax position.
pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(NnError::ShapeMismatch {
            op: "maxpool backward",
            axis: "upstream gradient".into(),
            expected: argmax.len(),
            found: grad_out.len(),
        });
    }
    let mut dx = Tensor::zeros(input_shape)?;
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormOutput {
    pub output: Tensor,
    /// Present in train mode; needed by [`batchnorm_backward`].
    pub cache: Option<BnCache>,
    /// Present in train mode: running statistics after the moving-average update.
    pub updated: Option<RunningStats>,
}

/// Channel count and the (batch, spatial) extents of a `[N, C, ...]` tensor.
fn bn_layout(input: &Tensor) -> Result<(usize, usize, usize)> {
    if input.rank() < 2 {
        return Err(NnError::RankMismatch {
            op: "batchnorm",
            expected: ">= 2 ([batch, channels, ...])".into(),
            found: input.rank(),
        });
    }
    let s = input.shape();
    Ok((s[0], s[1], s[2..].iter().product()))
}

/// Per-channel normalization over the batch and spatial axes.
///
/// Train mode uses the batch statistics (population variance) and blends
/// them into the running statistics as `momentum·old + (1−momentum)·batch`.
/// Infer mode uses the running statistics unchanged.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
    momentum: f64,
    mode: BnMode,
    running: Option<&RunningStats>,
) -> Result<BatchNormOutput> {
    let (n, c, sp) = bn_layout(input)?;
    for (name, len) in [("gamma", gamma.len()), ("beta", beta.len())] {
        if len != c {
            return Err(NnError::ShapeMismatch {
                op: "batchnorm",
                axis: name.into(),
                expected: c,
                found: len,
            });
        }
    }
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    match mode {
        BnMode::Infer => {
            let stats = running.ok_or(NnError::MissingRunningStats)?;
            if stats.mean.len() != c || stats.var.len() != c {
                return Err(NnError::ShapeMismatch {
                    op: "batchnorm",
                    axis: "running statistics".into(),
                    expected: c,
                    found: stats.mean.len(),
                });
            }
            for b in 0..n {
                for ch in 0..c {
                    let inv = 1.0 / (stats.var[ch] + epsilon).sqrt();
                    let base = (b * c + ch) * sp;
                    for i in base..base + sp {
                        out[i] = gamma[ch] * (x[i] - stats.mean[ch]) * inv + beta[ch];
                    }
                }
            }
            Ok(BatchNormOutput {
                output: Tensor::new(input.shape().to_vec(), out)?,
                cache: None,
                updated: None,
            })
        }
        BnMode::Train => {
            if n < 2 {
                return Err(NnError::BatchTooSmall(n));
            }
            let count = (n * sp) as f64;
            let prior = running.cloned().unwrap_or_else(|| RunningStats::identity(c));
            let mut updated = prior.clone();
            let mut normalized = vec![0.0; x.len()];
            let mut inv_std = vec![0.0; c];
            for ch in 0..c {
                let mut sum = 0.0;
                for b in 0..n {
                    let base = (b * c + ch) * sp;
                    sum += x[base..base + sp].iter().sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0.0;
                for b in 0..n {
                    let base = (b * c + ch) * sp;
                    sq += x[base..base + sp].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / count;
                let inv = 1.0 / (var + epsilon).sqrt();
                inv_std[ch] = inv;
                for b in 0..n {
                    let base = (b * c + ch) * sp;
                    for i in base..base + sp {
                        let xh = (x[i] - mean) * inv;
                        normalized[i] = xh;
                        out[i] = gamma[ch] * xh + beta[ch];
                    }
                }
                updated.mean[ch] = momentum * prior.mean[ch] + (1.0 - momentum) * mean;
                updated.var[ch] = momentum * prior.var[ch] + (1.0 - momentum) * var;
            }
            Ok(BatchNormOutput {
                output: Tensor::new(input.shape().to_vec(), out)?,
                cache: Some(BnCache {
                    normalized: Tensor::new(input.shape().to_vec(), normalized)?,
                    inv_std,
                }),
                updated: Some(updated),
            })
        }
    }
}

pub struct BnGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Backward pass of train-mode batch normalization.
pub fn batchnorm_backward(cache: &BnCache, gamma: &[f64], grad_out: &Tensor) -> Result<BnGrads> {
    let (n, c, sp) = bn_layout(&cache.normalized)?;
    let xh = cache.normalized.data();
    let dy = grad_out.data();
    let m = (n * sp) as f64;
    let mut dx = vec![0.0; xh.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for b in 0..n {
            let base = (b * c + ch) * sp;
            for i in base..base + sp {
                sum_dy += dy[i];
                sum_dy_xh += dy[i] * xh[i];
            }
        }
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        let scale = gamma[ch] * cache.inv_std[ch] / m;
        for b in 0..n {
            let base = (b * c + ch) * sp;
            for i in base..base + sp {
                dx[i] = scale * (m * dy[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    }
    Ok(BnGrads {
        input: Tensor::new(cache.normalized.shape().to_vec(), dx)?,
        gamma: dgamma,
        beta: dbeta,
    })
}

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(NnError::RankMismatch {
            op,
            expected: "2".into(),
            found: t.rank(),
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// `input · weights + bias` for `input: [batch, n]`, `weights: [n, m]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (batch, n) = matrix_dims("dense input", input)?;
    let (wn, m) = matrix_dims("dense weights", weights)?;
    if wn != n {
        return Err(NnError::ShapeMismatch {
            op: "dense",
            axis: "inner dimension".into(),
            expected: wn,
            found: n,
        });
    }
    if bias.len() != m {
        return Err(NnError::ShapeMismatch {
            op: "dense",
            axis: "bias length".into(),
            expected: m,
            found: bias.len(),
        });
    }
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(batch * m);
    for b in 0..batch {
        let mut row = bias.to_vec();
        for (i, &xi) in x[b * n..(b + 1) * n].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (r, &wij) in row.iter_mut().zip(&w[i * m..(i + 1) * m]) {
                *r += xi * wij;
            }
        }
        out.extend(row);
    }
    Tensor::new(vec![batch, m], out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let (batch, n) = matrix_dims("dense input", input)?;
    let (_, m) = matrix_dims("dense weights", weights)?;
    let x = input.data();
    let w = weights.data();
    let dy = grad_out.data();
    let mut dx = vec![0.0; batch * n];
    let mut dw = vec![0.0; n * m];
    let mut db = vec![0.0; m];
    for b in 0..batch {
        let g = &dy[b * m..(b + 1) * m];
        for (d, &gv) in db.iter_mut().zip(g) {
            *d += gv;
        }
        for i in 0..n {
            let xi = x[b * n + i];
            let wrow = &w[i * m..(i + 1) * m];
            let dwrow = &mut dw[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for j in 0..m {
                dwrow[j] += xi * g[j];
                acc += g[j] * wrow[j];
            }
            dx[b * n + i] = acc;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![batch, n], dx)?,
        weights: Tensor::new(vec![n, m], dw)?,
        bias: db,
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut dx = grad_out.clone();
    for (d, &x) in dx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

/// Row-wise softmax of a `[batch, classes]` tensor, max-subtracted.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let (_, classes) = matrix_dims("softmax", logits)?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(classes) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SoftmaxLoss {
    pub loss: f64,
    pub probs: Tensor,
    /// Gradient of the loss with respect to the logits.
    pub grad_logits: Tensor,
}

/// Mean negative log-likelihood of `labels` under the row softmax of `logits`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let out = softmax_cross_entropy_weighted(logits, labels, None)?;
    Ok((out.loss, out.probs))
}

/// Weighted variant: `Σ wᵢ·nllᵢ / Σ wᵢ`. `None` means unit weights.
pub fn softmax_cross_entropy_weighted(
    logits: &Tensor,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<SoftmaxLoss> {
    let (batch, classes) = matrix_dims("softmax cross-entropy", logits)?;
    if labels.len() != batch {
        return Err(NnError::ShapeMismatch {
            op: "softmax cross-entropy",
            axis: "label count".into(),
            expected: batch,
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::LabelOutOfRange { label: bad, classes });
    }
    let unit = vec![1.0; batch];
    let w = weights.unwrap_or(&unit);
    if w.len() != batch {
        return Err(NnError::ShapeMismatch {
            op: "softmax cross-entropy",
            axis: "sample weights".into(),
            expected: batch,
            found: w.len(),
        });
    }
    let total_w: f64 = w.iter().sum();
    let z = logits.data();
    let mut probs = vec![0.0; z.len()];
    let mut grad = vec![0.0; z.len()];
    let mut loss = 0.0;
    for b in 0..batch {
        let row = &z[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        for k in 0..classes {
            let p = (row[k] - max).exp() / sum;
            probs[b * classes + k] = p;
            let target = if k == labels[b] { 1.0 } else { 0.0 };
            grad[b * classes + k] = w[b] * (p - target) / total_w;
        }
        loss += w[b] * -(row[labels[b]] - max - log_sum);
    }
    Ok(SoftmaxLoss {
        loss: loss / total_w,
        probs: Tensor::new(logits.shape().to_vec(), probs)?,
        grad_logits: Tensor::new(logits.shape().to_vec(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_1d() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let k = t(&[1, 1, 1], &[1.0]);
        let y = conv_forward(&x, &k, &[0.0], &[1], &[0]).unwrap();
        assert_eq!(y.shape(), &[1, 3]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros(&[2, 3, 5, 6]).unwrap();
        let k = t(&[4, 3, 2, 2], &(0..48).map(|v| v as f64 * 0.1 - 2.0).collect::<Vec<_>>());
        let y = conv_forward(&x, &k, &[0.0; 4], &[2], &[1]).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_errors_name_the_axis() {
        let x = Tensor::zeros(&[2, 5]).unwrap();
        let k = Tensor::zeros(&[1, 3, 3]).unwrap();
        let err = conv_forward(&x, &k, &[0.0], &[1], &[0]).unwrap_err();
        assert!(err.to_string().contains("input channels"), "{err}");

        let x = Tensor::zeros(&[1, 2]).unwrap();
        let k = Tensor::zeros(&[1, 1, 3]).unwrap();
        let err = conv_forward(&x, &k, &[0.0], &[1], &[0]).unwrap_err();
        assert!(matches!(err, NnError::NonPositiveOutput { .. }), "{err}");
    }

    #[test]
    fn maxpool_small_cases() {
        let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let p = maxpool_forward(&x, 2, &[2], &[2]).unwrap();
        assert_eq!(p.output.shape(), &[1, 1, 1]);
        assert_eq!(p.output.data(), &[4.0]);
        assert_eq!(p.argmax, vec![3]);

        let c = Tensor::filled(&[1, 1, 4, 4], 2.5).unwrap();
        let p = maxpool_forward(&c, 2, &[2], &[2]).unwrap();
        assert!(p.output.data().iter().all(|&v| v == 2.5));
        // ties resolve to the first (lowest) index of each window
        assert_eq!(p.argmax, vec![0, 2, 8, 10]);

        assert!(maxpool_forward(&t(&[1, 1], &[1.0]), 1, &[2], &[2]).is_err());
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let data: Vec<f64> = (0..24).map(|v| (v as f64 * 1.7).sin() * 30.0 + 1.0).collect();
        let x = t(&[4, 2, 3], &data);
        let out = batchnorm_forward(&x, &[1.0, 1.0], &[0.0, 0.0], 1e-5, 0.9, BnMode::Train, None).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|b| (0..3).map(move |s| (b, s)))
                .map(|(b, s)| out.output.get(&[b, ch, s]))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn batchnorm_gamma_zero_gives_beta() {
        let x = t(&[3, 2], &[1.0, -4.0, 2.0, 7.0, 0.5, 3.0]);
        let out = batchnorm_forward(&x, &[0.0, 0.0], &[0.25, -1.5], 1e-5, 0.9, BnMode::Train, None).unwrap();
        for b in 0..3 {
            assert_eq!(out.output.get(&[b, 0]), 0.25);
            assert_eq!(out.output.get(&[b, 1]), -1.5);
        }
    }

    #[test]
    fn batchnorm_error_paths() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let e = batchnorm_forward(&x, &[1.0; 2], &[0.0; 2], 1e-5, 0.9, BnMode::Train, None).unwrap_err();
        assert!(matches!(e, NnError::BatchTooSmall(1)));
        let e = batchnorm_forward(&x, &[1.0; 2], &[0.0; 2], 1e-5, 0.9, BnMode::Infer, None).unwrap_err();
        assert!(matches!(e, NnError::MissingRunningStats));
    }

    #[test]
    fn dense_identity_and_zero() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let mut eye = Tensor::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        assert_eq!(dense_forward(&x, &eye, &[0.0; 3]).unwrap(), x);
        let z = Tensor::zeros(&[3, 2]).unwrap();
        let y = dense_forward(&x, &z, &[0.5, -2.0]).unwrap();
        assert_eq!(y.data(), &[0.5, -2.0, 0.5, -2.0]);
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 2]).unwrap(), &[0.0; 2]).is_err());
    }

    #[test]
    fn softmax_uniform_logits() {
        let (loss, probs) = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[0]).unwrap();
        assert_eq!(probs.data(), &[0.5, 0.5]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = t(&[2, 3], &[1.0, -2.0, 0.5, 3.0, 3.0, -1.0]);
        let b = t(&[2, 3], &[101.0, 98.0, 100.5, -97.0, -97.0, -101.0]);
        let (la, pa) = softmax_cross_entropy(&a, &[2, 0]).unwrap();
        let (lb, pb) = softmax_cross_entropy(&b, &[2, 0]).unwrap();
        assert!((la - lb).abs() < 1e-12);
        for (x, y) in pa.data().iter().zip(pb.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range() {
        let e = softmax_cross_entropy(&t(&[1, 2], &[0.0, 0.0]), &[2]).unwrap_err();
        assert!(matches!(e, NnError::LabelOutOfRange { label: 2, classes: 2 }));
    }
}
