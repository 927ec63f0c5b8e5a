use std::fmt::Write as _;

use crate::nn::Tensor;

use super::{DspError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenState {
    Contact,
    Hover,
}

impl PenState {
    /// Voxel channel: 0 for contact, 1 for hover.
    pub fn channel(self) -> usize {
        match self {
            PenState::Contact => 0,
            PenState::Hover => 1,
        }
    }

    fn code(self) -> char {
        match self {
            PenState::Contact => 'c',
            PenState::Hover => 'h',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenPoint {
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
    pub state: PenState,
}

/// One pen trajectory with strictly increasing timestamps and coordinates
/// in the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct PenStroke {
    points: Vec<PenPoint>,
}

impl PenStroke {
    pub fn new(points: Vec<PenPoint>) -> Result<Self> {
        for (index, p) in points.iter().enumerate() {
            let reason = if !p.t_ms.is_finite() {
                Some("timestamp is not finite".to_string())
            } else if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                Some(format!("coordinates ({}, {}) leave [0, 1]", p.x, p.y))
            } else if index > 0 && p.t_ms <= points[index - 1].t_ms {
                Some(format!("timestamp {} does not increase", p.t_ms))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(DspError::InvalidPenPoint { index, reason });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[PenPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Parses `t_ms,x,y,c|h` lines; blank lines separate strokes and `#` starts
/// a comment line.
pub fn parse_strokes(text: &str) -> Result<Vec<PenStroke>> {
    let mut strokes = Vec::new();
    let mut current: Vec<PenPoint> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    let flush = |current: &mut Vec<PenPoint>, lines: &mut Vec<usize>, strokes: &mut Vec<PenStroke>| -> Result<()> {
        if current.is_empty() {
            return Ok(());
        }
        let stroke = PenStroke::new(std::mem::take(current)).map_err(|e| match e {
            DspError::InvalidPenPoint { index, reason } => DspError::StrokeParse {
                line: lines[index],
                reason,
            },
            other => other,
        })?;
        lines.clear();
        strokes.push(stroke);
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut current, &mut lines, &mut strokes)?;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(DspError::StrokeParse {
                line: line_no,
                reason: format!("expected 4 fields t_ms,x,y,state, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| DspError::StrokeParse {
                line: line_no,
                reason: format!("{what} `{s}` is not a number"),
            })
        };
        let state = match fields[3] {
            "c" => PenState::Contact,
            "h" => PenState::Hover,
            other => {
                return Err(DspError::StrokeParse {
                    line: line_no,
                    reason: format!("state `{other}` is neither c nor h"),
                })
            }
        };
        lines.push(line_no);
        current.push(PenPoint {
            t_ms: num(fields[0], "t_ms")?,
            x: num(fields[1], "x")?,
            y: num(fields[2], "y")?,
            state,
        });
    }
    flush(&mut current, &mut lines, &mut strokes)?;
    Ok(strokes)
}

pub fn format_strokes(strokes: &[PenStroke]) -> String {
    let mut out = String::new();
    for (i, s) in strokes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for p in &s.points {
            let _ = writeln!(out, "{},{},{},{}", p.t_ms, p.x, p.y, p.state.code());
        }
    }
    out
}

/// Two-channel occupancy grid stored as (channel, x, y, t), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl VoxelGrid {
    pub const CHANNELS: usize = 2;

    fn offset(&self, c: usize, x: usize, y: usize, t: usize) -> usize {
        let [gx, gy, gt] = self.dims;
        ((c * gx + x) * gy + y) * gt + t
    }

    pub fn get(&self, c: usize, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.offset(c, x, y, t)]
    }

    pub fn shape(&self) -> [usize; 4] {
        [Self::CHANNELS, self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.data.clone()).expect("grid shape matches its data")
    }

    /// Non-zero cells as sorted (channel, x, y, t) tuples.
    pub fn occupied(&self) -> Vec<(usize, usize, usize, usize)> {
        let [gx, gy, gt] = self.dims;
        let mut out = Vec::new();
        for c in 0..Self::CHANNELS {
            for x in 0..gx {
                for y in 0..gy {
                    for t in 0..gt {
                        if self.get(c, x, y, t) != 0.0 {
                            out.push((c, x, y, t));
                        }
                    }
                }
            }
        }
        out
    }
}

fn grid_bin(v: f64, g: usize) -> usize {
    ((v * g as f64).floor().max(0.0) as usize).min(g - 1)
}

/// Time of each point min-max scaled to [0, 1] over all strokes (0 when
/// every point shares one timestamp).
pub fn scaled_times(strokes: &[PenStroke]) -> Vec<f64> {
    let times = || strokes.iter().flat_map(|s| s.points.iter().map(|p| p.t_ms));
    let lo = times().fold(f64::INFINITY, f64::min);
    let hi = times().fold(f64::NEG_INFINITY, f64::max);
    times()
        .map(|t| if hi > lo { (t - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Bins every point into its (state, x, y, t) voxel and divides the counts
/// by the largest count.
pub fn voxelize(strokes: &[PenStroke], dims: [usize; 3]) -> Result<VoxelGrid> {
    if dims.iter().any(|&d| d < 2) {
        return Err(DspError::GridDims(dims));
    }
    if strokes.iter().all(|s| s.is_empty()) {
        return Err(DspError::NoPoints);
    }
    let mut grid = VoxelGrid {
        dims,
        data: vec![0.0; VoxelGrid::CHANNELS * dims.iter().product::<usize>()],
    };
    let points = strokes.iter().flat_map(|s| s.points.iter());
    for (p, t) in points.zip(scaled_times(strokes)) {
        let at = grid.offset(
            p.state.channel(),
            grid_bin(p.x, dims[0]),
            grid_bin(p.y, dims[1]),
            grid_bin(t, dims[2]),
        );
        grid.data[at] += 1.0;
    }
    let max = grid.data.iter().copied().fold(0.0, f64::max);
    for v in &mut grid.data {
        *v /= max;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(t_ms: f64, x: f64, y: f64, state: PenState) -> PenPoint {
        PenPoint { t_ms, x, y, state }
    }

    #[test]
    fn single_point_fills_one_contact_voxel() {
        let s = PenStroke::new(vec![point(0.0, 0.5, 0.25, PenState::Contact)]).unwrap();
        let g = voxelize(&[s], [16, 16, 16]).unwrap();
        assert_eq!(g.occupied(), vec![(0, 8, 4, 0)]);
        assert_eq!(g.get(0, 8, 4, 0), 1.0);
        assert_eq!(g.data.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn identical_points_share_a_voxel() {
        let a = PenStroke::new(vec![point(0.0, 0.1, 0.1, PenState::Hover)]).unwrap();
        let g = voxelize(&[a.clone(), a], [4, 4, 4]).unwrap();
        assert_eq!(g.occupied(), vec![(1, 0, 0, 0)]);
        assert_eq!(g.get(1, 0, 0, 0), 1.0);
    }

    #[test]
    fn counts_scale_by_the_maximum() {
        let s = PenStroke::new(vec![
            point(0.0, 0.0, 0.0, PenState::Contact),
            point(1.0, 0.0, 0.0, PenState::Contact),
            point(100.0, 1.0, 1.0, PenState::Contact),
        ])
        .unwrap();
        let g = voxelize(&[s], [2, 2, 2]).unwrap();
        assert_eq!(g.get(0, 0, 0, 0), 1.0);
        assert_eq!(g.get(0, 1, 1, 1), 0.5);
    }

    #[test]
    fn stroke_validation() {
        assert!(PenStroke::new(vec![point(0.0, 1.2, 0.0, PenState::Contact)]).is_err());
        assert!(PenStroke::new(vec![
            point(5.0, 0.0, 0.0, PenState::Contact),
            point(5.0, 0.1, 0.0, PenState::Contact)
        ])
        .is_err());
        assert!(matches!(voxelize(&[], [16, 16, 16]), Err(DspError::NoPoints)));
        let s = PenStroke::new(vec![point(0.0, 0.0, 0.0, PenState::Contact)]).unwrap();
        assert!(matches!(voxelize(&[s], [1, 16, 16]), Err(DspError::GridDims(_))));
    }

    #[test]
    fn stroke_text_round_trip() {
        let text = "# spiral\n0,0.5,0.5,c\n10,0.55,0.5,c\n\n20,0.6,0.4,h\n";
        let strokes = parse_strokes(text).unwrap();
        assert_eq!(strokes.len(), 2);
        assert_eq!(strokes[1].points()[0].state, PenState::Hover);
        assert_eq!(parse_strokes(&format_strokes(&strokes)).unwrap(), strokes);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_strokes("0,0.1,0.1,c\n1,0.1,0.1,x\n").unwrap_err();
        assert!(matches!(err, DspError::StrokeParse { line: 2, .. }));
        let err = parse_strokes("0,0.1,0.1,c\n\n5,0.1,0.1,c\n3,0.2,0.1,c\n").unwrap_err();
        assert!(matches!(err, DspError::StrokeParse { line: 4, .. }));
        assert!(matches!(parse_strokes("1,2\n").unwrap_err(), DspError::StrokeParse { line: 1, .. }));
    }
}
