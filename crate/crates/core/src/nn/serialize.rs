//! Versioned text format for models.
//!
//! ```text
//! wardsense-model
//! format_version 1
//! rng_seed 7
//! input_shape 3 50
//! labels 2
//! label walking
//! label fall
//! layers 2
//! layer dense in=150 out=2
//! layer softmax
//! tags 1
//! tag pipeline activity
//! tensors 2
//! tensor param 0.weight 150 2
//! <150*2 values, space separated, 17 significant digits>
//! tensor param 0.bias 2
//! 0.0000000000000000e0 0.0000000000000000e0
//! end
//! ```
//!
//! Tensor sections are `param` (trained), `state` (batch-norm running
//! statistics) or `aux` (preprocessing constants). Every value is written
//! with 17 significant digits, which round-trips any `f64` exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::error::{NnError, Result};
use super::layer::LayerSpec;
use super::model::{Model, ParamSet, FORMAT_VERSION};
use super::tensor::Tensor;

const MAGIC: &str = "wardsense-model";

fn push_tensor(out: &mut String, section: &str, name: &str, t: &Tensor) {
    let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "tensor {section} {name} {}", dims.join(" "));
    let mut first = true;
    for v in t.data() {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn to_text(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version {}", model.format_version);
    let _ = writeln!(out, "rng_seed {}", model.rng_seed());
    let dims: Vec<String> = model.input_shape().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "input_shape {}", dims.join(" "));
    let _ = writeln!(out, "labels {}", model.label_names().len());
    for l in model.label_names() {
        let _ = writeln!(out, "label {l}");
    }
    let _ = writeln!(out, "layers {}", model.layers().len());
    for l in model.layers() {
        let _ = writeln!(out, "layer {l}");
    }
    let _ = writeln!(out, "tags {}", model.tags.len());
    for (k, v) in &model.tags {
        let _ = writeln!(out, "tag {k} {v}");
    }
    let count = model.params.len() + model.state.len() + model.aux.len();
    let _ = writeln!(out, "tensors {count}");
    for (section, set) in [("param", &model.params), ("state", &model.state), ("aux", &model.aux)] {
        for (name, t) in set.iter() {
            push_tensor(&mut out, section, name, t);
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, reason: impl Into<String>) -> NnError {
        NnError::Parse {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    /// Next line split as `keyword rest`, requiring the keyword.
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next_line()?;
        let (k, rest) = l.split_once(' ').unwrap_or((l, ""));
        if k != key {
            return Err(self.err(format!("expected `{key}`, found {l:?}")));
        }
        Ok(rest)
    }

    fn number<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        s.trim().parse().map_err(|e| self.err(format!("{what}: {e}")))
    }
}

pub fn from_text(text: &str) -> Result<Model> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let magic = lines.next_line()?;
    if magic != MAGIC {
        return Err(lines.err(format!("not a model file (header {magic:?})")));
    }
    let version: u32 = {
        let v = lines.field("format_version")?;
        lines.number(v, "format_version")?
    };
    if version > FORMAT_VERSION || version == 0 {
        return Err(NnError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let seed: u64 = {
        let v = lines.field("rng_seed")?;
        lines.number(v, "rng_seed")?
    };
    let input_shape: Vec<usize> = {
        let v = lines.field("input_shape")?;
        v.split_whitespace()
            .map(|d| lines.number(d, "input_shape"))
            .collect::<Result<_>>()?
    };
    let n_labels: usize = {
        let v = lines.field("labels")?;
        lines.number(v, "labels")?
    };
    let mut label_names = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        label_names.push(lines.field("label")?.to_string());
    }
    let n_layers: usize = {
        let v = lines.field("layers")?;
        lines.number(v, "layers")?
    };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = lines.field("layer")?;
        layers.push(spec.parse::<LayerSpec>().map_err(|e| lines.err(e))?);
    }
    let n_tags: usize = {
        let v = lines.field("tags")?;
        lines.number(v, "tags")?
    };
    let mut tags = BTreeMap::new();
    for _ in 0..n_tags {
        let rest = lines.field("tag")?;
        let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
        tags.insert(k.to_string(), v.to_string());
    }
    let n_tensors: usize = {
        let v = lines.field("tensors")?;
        lines.number(v, "tensors")?
    };
    let (mut params, mut state, mut aux) = (ParamSet::new(), ParamSet::new(), ParamSet::new());
    for _ in 0..n_tensors {
        let header = lines.field("tensor")?;
        let mut parts = header.split_whitespace();
        let section = parts.next().ok_or_else(|| lines.err("tensor section missing"))?;
        let name = parts.next().ok_or_else(|| lines.err("tensor name missing"))?.to_string();
        let shape: Vec<usize> = parts.map(|d| lines.number(d, "tensor shape")).collect::<Result<_>>()?;
        let body = lines.next_line()?;
        let data: Vec<f64> = body
            .split_whitespace()
            .map(|v| lines.number(v, &format!("value of {name}")))
            .collect::<Result<_>>()?;
        let t = Tensor::new(shape, data).map_err(|e| lines.err(format!("tensor {name}: {e}")))?;
        let target = match section {
            "param" => &mut params,
            "state" => &mut state,
            "aux" => &mut aux,
            other => return Err(lines.err(format!("unknown tensor section {other:?}"))),
        };
        target.insert(name, t);
    }
    if lines.next_line()? != "end" {
        return Err(lines.err("expected `end`"));
    }
    let mut model = Model::from_parts(input_shape, layers, params, state, label_names, seed, tags, aux)?;
    model.format_version = version;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_text(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_model() -> Model {
        let layers = vec![
            LayerSpec::conv(1, 2, 3, 3, 1),
            LayerSpec::batch_norm(3),
            LayerSpec::ReLU,
            LayerSpec::Flatten,
            LayerSpec::dense(15, 2),
            LayerSpec::Softmax,
        ];
        let mut m = Model::new(&[2, 5], layers, vec!["left side".into(), "right".into()], 11).unwrap();
        m.tags.insert("pipeline".into(), "test".into());
        m.aux.insert("norm.mean", Tensor::from_vec(vec![0.1, 1.0 / 3.0]).unwrap());
        m
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = small_model();
        let back = from_text(&to_text(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncation_is_a_parse_error() {
        let text = to_text(&small_model());
        for cut in [10, text.len() / 2, text.len() - 5] {
            let err = from_text(&text[..cut]).unwrap_err();
            assert!(matches!(err, NnError::Parse { .. } | NnError::InvalidShape { .. }), "{err}");
        }
    }

    #[test]
    fn future_version_is_rejected() {
        let text = to_text(&small_model()).replace("format_version 1", "format_version 2");
        assert!(matches!(from_text(&text).unwrap_err(), NnError::Version { found: 2, .. }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = to_text(&small_model()).replace("rng_seed 11", "rng_seed eleven");
        match from_text(&text).unwrap_err() {
            NnError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }
}
