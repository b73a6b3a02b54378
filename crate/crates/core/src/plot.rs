//! Minimal PNG rendering for heatmaps and line plots.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{ensure, Error, Result};

fn write_rgb(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Path {
        path: path.to_path_buf(),
        source,
    })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(pixels)?;
    writer.finish()?;
    Ok(())
}

/// Dark blue → yellow ramp for `t` in `[0, 1]`.
fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let stops = [
        (0.0, [20.0, 10.0, 60.0]),
        (0.35, [40.0, 90.0, 160.0]),
        (0.7, [60.0, 180.0, 120.0]),
        (1.0, [250.0, 230.0, 40.0]),
    ];
    for pair in stops.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let f = (t - t0) / (t1 - t0);
            return [0, 1, 2].map(|i| (c0[i] + f * (c1[i] - c0[i])).round() as u8);
        }
    }
    [250, 230, 40]
}

/// `10·log10(v / max)` floored at `floor_db`; an all-zero matrix maps to the floor.
pub fn to_db(rows: &[Vec<f64>], floor_db: f64) -> Vec<Vec<f64>> {
    let max = rows.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|&v| {
                    if max > 0.0 && v > 0.0 {
                        (10.0 * (v / max).log10()).max(floor_db)
                    } else {
                        floor_db
                    }
                })
                .collect()
        })
        .collect()
}

/// Renders `rows` (row 0 at the top) with each cell scaled up to at least
/// `cell` pixels, min-max normalised over the whole matrix.
pub fn write_heatmap(path: impl AsRef<Path>, rows: &[Vec<f64>], cell: usize) -> Result<()> {
    ensure!(
        !rows.is_empty() && !rows[0].is_empty(),
        "heatmap needs data"
    );
    let cols = rows[0].len();
    ensure!(
        rows.iter().all(|r| r.len() == cols),
        "heatmap rows differ in length"
    );
    let lo = rows.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = rows
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cell = cell.max(1);
    let (width, height) = (cols * cell, rows.len() * cell);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for row in rows {
        for _ in 0..cell {
            for &v in row {
                let c = colormap((v - lo) / span);
                for _ in 0..cell {
                    pixels.extend_from_slice(&c);
                }
            }
        }
    }
    write_rgb(path.as_ref(), width, height, &pixels)
}

const PALETTE: [[u8; 3]; 4] = [[30, 90, 200], [220, 80, 40], [40, 160, 70], [150, 60, 170]];

/// Draws each series as a polyline over a white canvas; all series share
/// one vertical range.
pub fn write_lines(
    path: impl AsRef<Path>,
    series: &[&[f64]],
    width: usize,
    height: usize,
) -> Result<()> {
    ensure!(width >= 2 && height >= 2, "plot canvas too small");
    ensure!(series.iter().any(|s| !s.is_empty()), "line plot needs data");
    let lo = series
        .iter()
        .flat_map(|s| s.iter())
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = series
        .iter()
        .flat_map(|s| s.iter())
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut pixels = vec![255u8; width * height * 3];
    let y_of = |v: f64| ((1.0 - (v - lo) / span) * (height - 1) as f64).round() as usize;
    for (k, s) in series.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let color = PALETTE[k % PALETTE.len()];
        let x_scale = if s.len() > 1 {
            (width - 1) as f64 / (s.len() - 1) as f64
        } else {
            0.0
        };
        let mut prev: Option<(usize, usize)> = None;
        for (i, &v) in s.iter().enumerate() {
            let p = ((i as f64 * x_scale).round() as usize, y_of(v));
            let (x0, y0) = prev.unwrap_or(p);
            let (x_lo, x_hi) = (x0.min(p.0), x0.max(p.0));
            let (y_lo, y_hi) = (y0.min(p.1), y0.max(p.1));
            for x in x_lo..=x_hi {
                for y in y_lo..=y_hi {
                    let idx = (y * width + x) * 3;
                    pixels[idx..idx + 3].copy_from_slice(&color);
                }
            }
            prev = Some(p);
        }
    }
    write_rgb(path.as_ref(), width, height, &pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_scale_peaks_at_zero() {
        let db = to_db(&[vec![1.0, 0.1, 0.0]], -80.0);
        assert_eq!(db[0][0], 0.0);
        assert!((db[0][1] + 10.0).abs() < 1e-12);
        assert_eq!(db[0][2], -80.0);
    }

    #[test]
    fn writes_decodable_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let heat = dir.path().join("h.png");
        write_heatmap(&heat, &[vec![0.0, 1.0], vec![2.0, 3.0]], 3).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&heat).unwrap()));
        let info = decoder.read_info().unwrap().info().clone();
        assert_eq!((info.width, info.height), (6, 6));

        let lines = dir.path().join("l.png");
        write_lines(&lines, &[&[0.0, 1.0, 0.5], &[1.0, 0.0]], 40, 20).unwrap();
        assert!(lines.metadata().unwrap().len() > 0);
    }
}
