//! Minimal PNG rendering: projection traces and confusion-matrix heatmaps.

use image::{Rgb, RgbImage};
use ndarray::Array2;
use std::path::Path;

use dorf_core::error::Result;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([190, 190, 190]);
const TRACE: Rgb<u8> = Rgb([32, 84, 176]);

fn draw_line(img: &mut RgbImage, x0: f32, y0: f32, x1: f32, y1: f32, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f32 / steps as f32;
        let x = x0 + t * (x1 - x0);
        let y = y0 + t * (y1 - y0);
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Renders a 2×2 grid of per-direction projection traces.
///
/// `traces` holds up to four `(label, series)` pairs sharing one time axis;
/// each panel is normalized to the common absolute maximum so panels are
/// comparable, with a gray zero line.
pub fn trace_grid(traces: &[(String, Vec<f64>)], path: &Path) -> Result<()> {
    let (pw, ph) = (360u32, 240u32);
    let margin = 12u32;
    let mut img = RgbImage::from_pixel(2 * pw + 3 * margin, 2 * ph + 3 * margin, BG);
    let abs_max = traces
        .iter()
        .flat_map(|(_, s)| s.iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()))
        .max(1e-12);
    for (idx, (_, series)) in traces.iter().take(4).enumerate() {
        let ox = margin + (idx as u32 % 2) * (pw + margin);
        let oy = margin + (idx as u32 / 2) * (ph + margin);
        // Panel frame and zero line.
        for x in 0..pw {
            img.put_pixel(ox + x, oy, AXIS);
            img.put_pixel(ox + x, oy + ph - 1, AXIS);
            img.put_pixel(ox + x, oy + ph / 2, AXIS);
        }
        for y in 0..ph {
            img.put_pixel(ox, oy + y, AXIS);
            img.put_pixel(ox + pw - 1, oy + y, AXIS);
        }
        if series.len() < 2 {
            continue;
        }
        let to_xy = |i: usize, v: f64| -> (f32, f32) {
            let x = ox as f32 + i as f32 / (series.len() - 1) as f32 * (pw - 1) as f32;
            let y = oy as f32 + (ph / 2) as f32 - (v / abs_max) as f32 * ((ph / 2 - 4) as f32);
            (x, y)
        };
        for i in 1..series.len() {
            let (x0, y0) = to_xy(i - 1, series[i - 1]);
            let (x1, y1) = to_xy(i, series[i]);
            draw_line(&mut img, x0, y0, x1, y1, TRACE);
        }
    }
    img.save(path)
        .map_err(|e| dorf_core::error::Error::invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Renders a row-normalized confusion matrix as a heatmap.
pub fn confusion_heatmap(counts: &Array2<f64>, path: &Path) -> Result<()> {
    let k = counts.dim().0;
    let cell = 72u32;
    let border = 2u32;
    let size = k as u32 * cell + (k as u32 + 1) * border;
    let mut img = RgbImage::from_pixel(size, size, Rgb([230, 230, 230]));
    for row in 0..k {
        let row_sum: f64 = counts.row(row).sum();
        for col in 0..k {
            let frac = if row_sum > 0.0 {
                counts[[row, col]] / row_sum
            } else {
                0.0
            };
            // Light blue to saturated blue ramp.
            let c = Rgb([
                (235.0 - 203.0 * frac) as u8,
                (240.0 - 156.0 * frac) as u8,
                (250.0 - 74.0 * frac) as u8,
            ]);
            let ox = border + col as u32 * (cell + border);
            let oy = border + row as u32 * (cell + border);
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(ox + x, oy + y, c);
                }
            }
        }
    }
    img.save(path)
        .map_err(|e| dorf_core::error::Error::invalid(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}
