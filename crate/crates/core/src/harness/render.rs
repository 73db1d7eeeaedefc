//! Heatmap export as PNG (one block per cell) or SVG (one rect per cell).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::MapResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorScale {
    #[default]
    Log,
    Linear,
}

/// Anchor colors of a perceptually ordered dark-to-bright ramp.
const ANCHORS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub(crate) const LEVELS: usize = 256;

fn palette(level: usize) -> [u8; 3] {
    let t = level as f64 / (LEVELS - 1) as f64 * (ANCHORS.len() - 1) as f64;
    let i = (t.floor() as usize).min(ANCHORS.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (ANCHORS[i][c] + f * (ANCHORS[i + 1][c] - ANCHORS[i][c])).round() as u8;
    }
    out
}

/// Color level of every value; `+inf` and NaN take the top level.
pub(crate) fn color_levels(values: &[f64], scale: ColorScale) -> Vec<usize> {
    let tf = |v: f64| match scale {
        ColorScale::Log => v.max(f64::MIN_POSITIVE).log10(),
        ColorScale::Linear => v,
    };
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).map(tf).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                return LEVELS - 1;
            }
            if !(hi > lo) {
                return 0;
            }
            let x = (tf(v) - lo) / (hi - lo);
            ((x * (LEVELS - 1) as f64).round() as usize).min(LEVELS - 1)
        })
        .collect()
}

/// Places cells on a raster: distinct x values become columns, distinct y
/// values rows (top row = largest y).
fn raster(map: &MapResult) -> Result<(usize, usize, Vec<Option<usize>>)> {
    if map.is_empty() || map.values.len() != map.cells.len() {
        return Err(Error::domain("heatmap needs a non-empty map with one value per cell"));
    }
    let mut xs: Vec<f64> = map.cells.iter().map(|c| c.x).collect();
    let mut ys: Vec<f64> = map.cells.iter().map(|c| c.y).collect();
    // cells nudged away from an AP must still land in their column
    let key = |v: f64| (v * 1e2).round();
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| key(*a) == key(*b));
    ys.sort_by(f64::total_cmp);
    ys.dedup_by(|a, b| key(*a) == key(*b));
    let (w, h) = (xs.len(), ys.len());
    let mut grid = vec![None; w * h];
    for (k, c) in map.cells.iter().enumerate() {
        let i = xs.iter().position(|x| key(*x) == key(c.x)).expect("x collected above");
        let j = ys.iter().position(|y| key(*y) == key(c.y)).expect("y collected above");
        grid[(h - 1 - j) * w + i] = Some(k);
    }
    Ok((w, h, grid))
}

/// PNG with a `cell_px` x `cell_px` block per cell. Cells missing from the
/// grid are left black.
pub fn render_png<W: Write>(map: &MapResult, scale: ColorScale, cell_px: usize, out: W) -> Result<()> {
    let (w, h, grid) = raster(map)?;
    let levels = color_levels(&map.values, scale);
    let px = cell_px.max(1);
    let (width, height) = (w * px, h * px);
    let mut data = vec![0u8; width * height * 3];
    for row in 0..height {
        for col in 0..width {
            if let Some(k) = grid[(row / px) * w + col / px] {
                let rgb = palette(levels[k]);
                data[(row * width + col) * 3..][..3].copy_from_slice(&rgb);
            }
        }
    }
    let mut enc = png::Encoder::new(out, width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
    writer.write_image_data(&data).map_err(|e| Error::Image(e.to_string()))?;
    writer.finish().map_err(|e| Error::Image(e.to_string()))?;
    Ok(())
}

/// SVG with one `cell_px` square per cell.
pub fn render_svg<W: Write>(map: &MapResult, scale: ColorScale, cell_px: usize, mut out: W) -> Result<()> {
    let (w, h, grid) = raster(map)?;
    let levels = color_levels(&map.values, scale);
    let px = cell_px.max(1);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        w * px,
        h * px
    )?;
    for (idx, cell) in grid.iter().enumerate() {
        if let Some(k) = cell {
            let [r, g, b] = palette(levels[*k]);
            writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{px}" height="{px}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                (idx % w) * px,
                (idx / w) * px
            )?;
        }
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

/// Writes PNG or SVG according to the extension of `path`.
pub fn render_heatmap(map: &MapResult, path: &Path, scale: ColorScale, cell_px: usize) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let file = BufWriter::new(File::create(path)?);
    match ext.as_deref() {
        Some("png") => render_png(map, scale, cell_px, file),
        Some("svg") => render_svg(map, scale, cell_px, file),
        _ => Err(Error::Image(format!("unsupported image extension in {}", path.display()))),
    }
}
