use std::fmt;

use super::error::{NnError, Result};

pub const DEFAULT_BN_EPSILON: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.9;

/// One layer of a sequential network. Spatial hyperparameters have one entry
/// per spatial axis (`dims` entries).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        dims: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Vec<usize>,
    },
    MaxPool {
        dims: usize,
        window: Vec<usize>,
        stride: Vec<usize>,
    },
    BatchNorm {
        channels: usize,
        epsilon: f64,
        momentum: f64,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    ReLU,
    Softmax,
}

impl LayerSpec {
    /// Convolution with a cubic kernel, unit stride and symmetric padding.
    pub fn conv(dims: usize, in_channels: usize, out_channels: usize, kernel: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            dims,
            in_channels,
            out_channels,
            kernel: vec![kernel; dims],
            stride: vec![1; dims],
            padding: vec![padding; dims],
        }
    }

    pub fn max_pool(dims: usize, window: usize) -> Self {
        LayerSpec::MaxPool {
            dims,
            window: vec![window; dims],
            stride: vec![window; dims],
        }
    }

    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            epsilon: DEFAULT_BN_EPSILON,
            momentum: DEFAULT_BN_MOMENTUM,
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::ReLU => "relu",
            LayerSpec::Softmax => "softmax",
        }
    }

    /// Checks the hyperparameter bounds of this layer in isolation.
    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| NnError::InvalidLayer {
            index,
            kind: self.kind().into(),
            reason,
        };
        match self {
            LayerSpec::Conv {
                dims,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if !(1..=3).contains(dims) {
                    return Err(bad(format!("dims must be 1, 2 or 3, got {dims}")));
                }
                if *in_channels == 0 || *out_channels == 0 {
                    return Err(bad("channel counts must be >= 1".into()));
                }
                for (name, v) in [("kernel", kernel), ("stride", stride), ("padding", padding)] {
                    if v.len() != *dims {
                        return Err(bad(format!("{name} needs {dims} entries, got {}", v.len())));
                    }
                }
                if kernel.iter().chain(stride.iter()).any(|&v| v == 0) {
                    return Err(bad("kernel and stride entries must be >= 1".into()));
                }
            }
            LayerSpec::MaxPool { dims, window, stride } => {
                if !(1..=3).contains(dims) {
                    return Err(bad(format!("dims must be 1, 2 or 3, got {dims}")));
                }
                if window.len() != *dims || stride.len() != *dims {
                    return Err(bad(format!("window and stride need {dims} entries")));
                }
                if window.iter().chain(stride.iter()).any(|&v| v == 0) {
                    return Err(bad("window and stride entries must be >= 1".into()));
                }
            }
            LayerSpec::BatchNorm {
                channels,
                epsilon,
                momentum,
            } => {
                if *channels == 0 {
                    return Err(bad("channels must be >= 1".into()));
                }
                if !(*epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(bad(format!("epsilon must be > 0, got {epsilon}")));
                }
                if !(0.0..=1.0).contains(momentum) {
                    return Err(bad(format!("momentum must lie in [0, 1], got {momentum}")));
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                if *inputs == 0 || *outputs == 0 {
                    return Err(bad("inputs and outputs must be >= 1".into()));
                }
            }
            LayerSpec::Flatten | LayerSpec::ReLU | LayerSpec::Softmax => {}
        }
        Ok(())
    }

    /// Output shape (without batch axis) for a given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        self.validate(index)?;
        let bad = |reason: String| NnError::InvalidLayer {
            index,
            kind: self.kind().into(),
            reason,
        };
        match self {
            LayerSpec::Conv {
                dims,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != dims + 1 {
                    return Err(bad(format!("expects rank {} input, got {:?}", dims + 1, input)));
                }
                if input[0] != *in_channels {
                    return Err(bad(format!("expects {in_channels} input channels, got {}", input[0])));
                }
                let mut out = vec![*out_channels];
                for a in 0..*dims {
                    let span = input[a + 1] + 2 * padding[a];
                    if span < kernel[a] {
                        return Err(bad(format!(
                            "kernel {} exceeds padded extent {} on spatial axis {a}",
                            kernel[a], span
                        )));
                    }
                    out.push((span - kernel[a]) / stride[a] + 1);
                }
                Ok(out)
            }
            LayerSpec::MaxPool { dims, window, stride } => {
                if input.len() != dims + 1 {
                    return Err(bad(format!("expects rank {} input, got {:?}", dims + 1, input)));
                }
                let mut out = vec![input[0]];
                for a in 0..*dims {
                    if input[a + 1] < window[a] {
                        return Err(bad(format!(
                            "window {} exceeds extent {} on spatial axis {a}",
                            window[a],
                            input[a + 1]
                        )));
                    }
                    out.push((input[a + 1] - window[a]) / stride[a] + 1);
                }
                Ok(out)
            }
            LayerSpec::BatchNorm { channels, .. } => {
                if input[0] != *channels {
                    return Err(bad(format!("expects {channels} channels, got {}", input[0])));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { inputs, outputs } => {
                if input.len() != 1 || input[0] != *inputs {
                    return Err(bad(format!("expects a flat input of {inputs}, got {input:?}")));
                }
                Ok(vec![*outputs])
            }
            LayerSpec::ReLU => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err(bad(format!("expects a flat input, got {input:?}")));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Trainable parameter shapes with their short names.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let mut w = vec![*out_channels, *in_channels];
                w.extend_from_slice(kernel);
                vec![("weight", w), ("bias", vec![*out_channels])]
            }
            LayerSpec::BatchNorm { channels, .. } => vec![("gamma", vec![*channels]), ("beta", vec![*channels])],
            LayerSpec::Dense { inputs, outputs } => {
                vec![("weight", vec![*inputs, *outputs]), ("bias", vec![*outputs])]
            }
            _ => Vec::new(),
        }
    }

    /// Non-trainable state shapes (batch-norm running statistics).
    pub fn state_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::BatchNorm { channels, .. } => {
                vec![("running_mean", vec![*channels]), ("running_var", vec![*channels])]
            }
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` of the weight tensor, if any.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let k: usize = kernel.iter().product();
                Some((in_channels * k, out_channels * k))
            }
            LayerSpec::Dense { inputs, outputs } => Some((*inputs, *outputs)),
            _ => None,
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                dims,
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv dims={dims} in={in_channels} out={out_channels} kernel={} stride={} padding={}",
                join(kernel),
                join(stride),
                join(padding)
            ),
            LayerSpec::MaxPool { dims, window, stride } => {
                write!(f, "maxpool dims={dims} window={} stride={}", join(window), join(stride))
            }
            LayerSpec::BatchNorm {
                channels,
                epsilon,
                momentum,
            } => write!(f, "batchnorm channels={channels} epsilon={epsilon:e} momentum={momentum:e}"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense in={inputs} out={outputs}"),
            LayerSpec::ReLU => f.write_str("relu"),
            LayerSpec::Softmax => f.write_str("softmax"),
        }
    }
}

/// Parses the [`Display`](fmt::Display) form back into a layer.
impl std::str::FromStr for LayerSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or("empty layer description")?;
        let mut fields = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got {p:?}"))?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("{kind}: missing field {k:?}"));
        let num = |k: &str| -> std::result::Result<usize, String> {
            get(k)?.parse().map_err(|e| format!("{kind}: field {k:?}: {e}"))
        };
        let list = |k: &str| -> std::result::Result<Vec<usize>, String> {
            get(k)?
                .split(',')
                .map(|x| x.parse().map_err(|e| format!("{kind}: field {k:?}: {e}")))
                .collect()
        };
        let real = |k: &str| -> std::result::Result<f64, String> {
            get(k)?.parse().map_err(|e| format!("{kind}: field {k:?}: {e}"))
        };
        Ok(match kind {
            "conv" => LayerSpec::Conv {
                dims: num("dims")?,
                in_channels: num("in")?,
                out_channels: num("out")?,
                kernel: list("kernel")?,
                stride: list("stride")?,
                padding: list("padding")?,
            },
            "maxpool" => LayerSpec::MaxPool {
                dims: num("dims")?,
                window: list("window")?,
                stride: list("stride")?,
            },
            "batchnorm" => LayerSpec::BatchNorm {
                channels: num("channels")?,
                epsilon: real("epsilon")?,
                momentum: real("momentum")?,
            },
            "flatten" => LayerSpec::Flatten,
            "dense" => LayerSpec::Dense {
                inputs: num("in")?,
                outputs: num("out")?,
            },
            "relu" => LayerSpec::ReLU,
            "softmax" => LayerSpec::Softmax,
            other => return Err(format!("unknown layer kind {other:?}")),
        })
    }
}

/// Instance shapes after each layer (index 0 is the model input), or the
/// first composition error.
pub fn infer_shapes(input_shape: &[usize], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input_shape.is_empty() || input_shape.len() > 4 || input_shape.contains(&0) {
        return Err(NnError::InvalidShape {
            shape: input_shape.to_vec(),
            reason: "model input must have rank 1..=4 with positive sizes".into(),
        });
    }
    let mut shapes = vec![input_shape.to_vec()];
    for (i, layer) in layers.iter().enumerate() {
        let next = layer.output_shape(i, shapes.last().expect("non-empty"))?;
        shapes.push(next);
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse_round_trip() {
        let layers = [
            LayerSpec::Conv {
                dims: 3,
                in_channels: 1,
                out_channels: 16,
                kernel: vec![3, 1, 5],
                stride: vec![1, 1, 1],
                padding: vec![0, 0, 2],
            },
            LayerSpec::max_pool(2, 2),
            LayerSpec::batch_norm(8),
            LayerSpec::Flatten,
            LayerSpec::dense(10, 3),
            LayerSpec::ReLU,
            LayerSpec::Softmax,
        ];
        for l in layers {
            let back: LayerSpec = l.to_string().parse().unwrap();
            assert_eq!(back, l);
        }
    }

    #[test]
    fn shape_inference_through_a_stack() {
        let layers = vec![
            LayerSpec::conv(1, 3, 16, 5, 2),
            LayerSpec::ReLU,
            LayerSpec::max_pool(1, 2),
            LayerSpec::Flatten,
            LayerSpec::dense(400, 3),
            LayerSpec::Softmax,
        ];
        let shapes = infer_shapes(&[3, 50], &layers).unwrap();
        assert_eq!(shapes[1], vec![16, 50]);
        assert_eq!(shapes[3], vec![16, 25]);
        assert_eq!(shapes[6], vec![3]);
    }

    #[test]
    fn mis_shaped_stacks_are_rejected() {
        let wrong_channels = vec![LayerSpec::conv(1, 2, 4, 3, 0)];
        assert!(infer_shapes(&[3, 10], &wrong_channels).is_err());
        let dense_before_flatten = vec![LayerSpec::conv(1, 3, 4, 3, 0), LayerSpec::dense(32, 2)];
        assert!(infer_shapes(&[3, 10], &dense_before_flatten).is_err());
        let zero_kernel = vec![LayerSpec::conv(1, 3, 4, 0, 0)];
        assert!(infer_shapes(&[3, 10], &zero_kernel).is_err());
        let bad_eps = vec![LayerSpec::BatchNorm {
            channels: 3,
            epsilon: 0.0,
            momentum: 0.9,
        }];
        assert!(infer_shapes(&[3, 10], &bad_eps).is_err());
        let pool_too_big = vec![LayerSpec::max_pool(1, 11)];
        assert!(infer_shapes(&[3, 10], &pool_too_big).is_err());
    }
}
