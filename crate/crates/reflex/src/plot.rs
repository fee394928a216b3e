//! Standalone PNG figures: image grids and simple line plots.

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use reflex_core::Tensor;

use crate::error::Result;
use crate::io::to_rgb8;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const PALETTE: [Rgb<u8>; 4] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
];

/// Places equally sized `[H, W, 3]` images side by side with a gap.
pub fn image_row(images: &[Tensor], gap: u32) -> Result<RgbImage> {
    let tiles: Vec<RgbImage> = images.iter().map(to_rgb8).collect::<Result<_>>()?;
    let (tw, th) = tiles.first().map(|t| t.dimensions()).unwrap_or((0, 0));
    let n = tiles.len() as u32;
    let width = (n * tw + n.saturating_sub(1) * gap).max(1);
    let mut out = RgbImage::from_pixel(width, th.max(1), BACKGROUND);
    for (i, tile) in tiles.iter().enumerate() {
        image::imageops::replace(&mut out, tile, (i as u32 * (tw + gap)) as i64, 0);
    }
    Ok(out)
}

/// Plots each series against `xs` on shared axes, each scaled to its own
/// `[min, max]` so trends are comparable. Points are marked with squares.
pub fn line_plot(xs: &[f64], series: &[Vec<f64>], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let margin = 24.0f32;
    let (w, h) = (width as f32 - 2.0 * margin, height as f32 - 2.0 * margin);
    let axis = Rgb([0, 0, 0]);
    draw_line_segment_mut(&mut img, (margin, margin + h), (margin + w, margin + h), axis);
    draw_line_segment_mut(&mut img, (margin, margin), (margin, margin + h), axis);
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (x0, xr) = span(xs);
    for (s, ys) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let (y0, yr) = span(ys);
        let pts: Vec<(f32, f32)> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let px = if xs.len() > 1 { (x - x0) / xr } else { 0.5 };
                (
                    margin + px as f32 * w,
                    margin + h - ((y - y0) / yr) as f32 * h,
                )
            })
            .collect();
        for pair in pts.windows(2) {
            draw_line_segment_mut(&mut img, pair[0], pair[1], color);
        }
        for &(x, y) in &pts {
            draw_filled_rect_mut(&mut img, Rect::at(x as i32 - 2, y as i32 - 2).of_size(5, 5), color);
        }
    }
    draw_hollow_rect_mut(&mut img, Rect::at(0, 0).of_size(width, height), Rgb([200, 200, 200]));
    img
}
