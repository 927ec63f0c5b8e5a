use std::fmt::Write as _;
use std::path::Path;

use super::{
    check_population, io_error, label_index, model_fingerprint, read_case_index, require_tag, PipelineError, Result,
    PIPELINE_TAG,
};
use crate::dsp::{parse_strokes, scaled_times, voxelize, PenStroke};
use crate::nn::{train, Dataset, LayerSpec, Model, Tensor, TrainConfig, TrainOutcome};

const KIND: &str = "cognitive";

pub const COGNITIVE_LABELS: [&str; 2] = ["not_at_risk", "at_risk"];
pub const GRID_DIMS: [usize; 3] = [16, 16, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct StrokeCase {
    pub strokes: Vec<PenStroke>,
    /// Index into [`COGNITIVE_LABELS`].
    pub label: usize,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningResult {
    /// Posterior of `at_risk`.
    pub risk_posterior: f64,
    pub posterior: Vec<f64>,
    pub label: String,
    pub grid_dims: [usize; 3],
    pub model_id: String,
}

/// Reads a case index whose paths point at stroke files.
pub fn load_stroke_cases(index: &Path) -> Result<Vec<StrokeCase>> {
    read_case_index(index)?
        .into_iter()
        .map(|e| {
            let text = std::fs::read_to_string(&e.path).map_err(io_error(&e.path))?;
            Ok(StrokeCase {
                strokes: parse_strokes(&text)?,
                label: label_index(&COGNITIVE_LABELS, &e.label)?,
                subject_id: e.id,
            })
        })
        .collect()
}

/// The voxelized trajectory as a `2 × 16 × 16 × 16` tensor.
pub fn grid_tensor(strokes: &[PenStroke]) -> Result<Tensor> {
    Ok(voxelize(strokes, GRID_DIMS)?.to_tensor())
}

pub fn cognitive_layers() -> Vec<LayerSpec> {
    let side = (GRID_DIMS[0] - 2) / 2;
    vec![
        LayerSpec::conv(3, 2, 8, 3, 0),
        LayerSpec::ReLU,
        LayerSpec::max_pool(3, 2),
        LayerSpec::Flatten,
        LayerSpec::dense(8 * side * side * side, 32),
        LayerSpec::ReLU,
        LayerSpec::dense(32, 2),
        LayerSpec::Softmax,
    ]
}

pub fn train_cognitive(cases: &[StrokeCase], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if cases.is_empty() {
        return Err(PipelineError::Empty("cognitive corpus".into()));
    }
    let names: Vec<String> = COGNITIVE_LABELS.iter().map(|s| s.to_string()).collect();
    let labels: Vec<usize> = cases.iter().map(|c| c.label).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= names.len()) {
        return Err(PipelineError::UnknownLabel(bad.to_string()));
    }
    check_population(&labels, &names, 1)?;
    let inputs = cases
        .iter()
        .map(|c| grid_tensor(&c.strokes))
        .collect::<Result<Vec<_>>>()?;
    let [gx, gy, gt] = GRID_DIMS;
    let mut model = Model::new(&[2, gx, gy, gt], cognitive_layers(), names, config.seed)?;
    model.tags.insert(PIPELINE_TAG.into(), KIND.into());
    model.tags.insert("grid".into(), format!("{gx},{gy},{gt}"));
    Ok(train(model, &Dataset::new(inputs, labels)?, config)?)
}

pub fn screen_cognitive(model: &Model, strokes: &[PenStroke]) -> Result<ScreeningResult> {
    require_tag(model, KIND)?;
    let p = model.predict_one(&grid_tensor(strokes)?)?;
    Ok(ScreeningResult {
        risk_posterior: p.posterior[1],
        label: p.label,
        posterior: p.posterior,
        grid_dims: GRID_DIMS,
        model_id: model_fingerprint(model),
    })
}

/// Writes one `x,y,t_scaled,channel` row per pen point (channel 0 contact,
/// 1 hover; time min-max scaled to [0, 1]) and returns the row count.
pub fn export_point_cloud(strokes: &[PenStroke], path: &Path) -> Result<usize> {
    let points: Vec<_> = strokes.iter().flat_map(|s| s.points()).collect();
    if points.is_empty() {
        return Err(PipelineError::Empty("stroke list".into()));
    }
    let mut out = String::new();
    for (p, t) in points.iter().zip(scaled_times(strokes)) {
        let _ = writeln!(out, "{},{},{},{}", p.x, p.y, t, p.state.channel());
    }
    std::fs::write(path, out).map_err(io_error(path))?;
    Ok(points.len())
}

/// Inverse of [`export_point_cloud`]'s format.
pub fn parse_point_cloud(text: &str) -> Result<Vec<(f64, f64, f64, usize)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |reason: String| PipelineError::Format {
                path: "point cloud".into(),
                line: i + 1,
                reason,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", f.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let channel = f[3].trim().parse::<usize>().map_err(|e| bad(format!("`{}`: {e}", f[3])))?;
            Ok((num(f[0])?, num(f[1])?, num(f[2])?, channel))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{PenPoint, PenState};
    use crate::nn::infer_shapes;

    #[test]
    fn architecture_type_checks() {
        let shapes = infer_shapes(&[2, 16, 16, 16], &cognitive_layers()).unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![2]);
    }

    #[test]
    fn point_cloud_round_trip() {
        let stroke = PenStroke::new(vec![
            PenPoint {
                t_ms: 10.0,
                x: 0.1,
                y: 0.2,
                state: PenState::Contact,
            },
            PenPoint {
                t_ms: 30.0,
                x: 0.3,
                y: 0.4,
                state: PenState::Hover,
            },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        assert_eq!(export_point_cloud(&[stroke], &path).unwrap(), 2);
        let rows = parse_point_cloud(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rows, vec![(0.1, 0.2, 0.0, 0), (0.3, 0.4, 1.0, 1)]);
        assert!(export_point_cloud(&[], &path).is_err());
    }
}
