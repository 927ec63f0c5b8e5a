use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use wardsense_core::dsp::{decode_pcm, parse_strokes, spectrogram as stft, voxelize as bin, PenStroke, SpectrogramParams};
use wardsense_core::pipelines::export_point_cloud;

use crate::args::{ExportCloudArgs, SpectrogramArgs, VoxelizeArgs};
use crate::usage;

fn read_strokes(path: &Path) -> anyhow::Result<Vec<PenStroke>> {
    if !path.is_file() {
        return usage(format!("--in {}: no such file", path.display()));
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_strokes(&text).with_context(|| path.display().to_string())
}

/// One row per frame: `frame,bin_0,…,bin_{n-1}` in dB.
pub fn spectrogram(a: &SpectrogramArgs) -> anyhow::Result<()> {
    let params = SpectrogramParams {
        fft_size: a.fft,
        hop: a.hop,
        floor_db: a.floor_db,
    };
    if let Err(e) = params.validate() {
        return usage(e.to_string());
    }
    if a.rate == 0 {
        return usage("--rate must be positive");
    }
    if !a.input.is_file() {
        return usage(format!("--in {}: no such file", a.input.display()));
    }
    let bytes = std::fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let audio = decode_pcm(&bytes, a.rate)?;
    let s = stft(&audio, &params)?;
    let mut out = String::from("frame");
    for b in 0..s.bin_count {
        let _ = write!(out, ",bin_{b}");
    }
    out.push('\n');
    for f in 0..s.frame_count {
        let _ = write!(out, "{f}");
        for v in s.frame(f) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    std::fs::write(&a.out, out).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("{} frames × {} bins written to {}", s.frame_count, s.bin_count, a.out.display());
    Ok(())
}

fn parse_dims(text: &str) -> anyhow::Result<[usize; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.parse().ok()).collect();
    match parsed.as_deref() {
        Some(&[x, y, t]) if x >= 2 && y >= 2 && t >= 2 => Ok([x, y, t]),
        _ => usage(format!("--dims must be three integers ≥ 2 like 16,16,16, got `{text}`")),
    }
}

/// Occupied cells only: `channel,x,y,t,value`, channel 0 for pen contact
/// and 1 for hover.
pub fn voxelize(a: &VoxelizeArgs) -> anyhow::Result<()> {
    let dims = parse_dims(&a.dims)?;
    let strokes = read_strokes(&a.input)?;
    let grid = bin(&strokes, dims)?;
    let mut out = String::from("channel,x,y,t,value\n");
    let cells = grid.occupied();
    for &(c, x, y, t) in &cells {
        let _ = writeln!(out, "{c},{x},{y},{t},{}", grid.get(c, x, y, t));
    }
    std::fs::write(&a.out, out).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!(
        "{} occupied cells of 2×{}×{}×{} written to {}",
        cells.len(),
        dims[0],
        dims[1],
        dims[2],
        a.out.display()
    );
    Ok(())
}

pub fn export_cloud(a: &ExportCloudArgs) -> anyhow::Result<()> {
    let strokes = read_strokes(&a.input)?;
    let rows = export_point_cloud(&strokes, &a.out)?;
    println!("{rows} points written to {}", a.out.display());
    Ok(())
}
