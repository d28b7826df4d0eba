//! Minimal line plots for evaluation curves, rendered straight to PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const MARGIN: u32 = 40;
const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

#[derive(Debug, Clone)]
pub struct Series {
    pub points: Vec<(f64, f64)>,
}

/// Data ranges mapped onto the plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Axes {
    /// Tight x range over all series, y fixed to `[0, 1]`.
    pub fn fit_unit_y(series: &[Series]) -> Axes {
        let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let x = if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0), lo.max(0.0) + 1.0)
        };
        Axes { x, y: (0.0, 1.0) }
    }
}

/// Draws the series as polylines over a light grid (tenths of each axis).
pub fn render(series: &[Series], axes: Axes, width: u32, height: u32) -> Result<RgbImage> {
    if width <= 2 * MARGIN || height <= 2 * MARGIN {
        return Err(Error::invalid(format!("plot {width}x{height} is too small")));
    }
    if !(axes.x.1 > axes.x.0 && axes.y.1 > axes.y.0) {
        return Err(Error::invalid("plot axes need increasing ranges"));
    }
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let (pw, ph) = ((width - 2 * MARGIN) as f64, (height - 2 * MARGIN) as f64);
    let to_px = |x: f64, y: f64| {
        let u = (x - axes.x.0) / (axes.x.1 - axes.x.0);
        let v = (y - axes.y.0) / (axes.y.1 - axes.y.0);
        (MARGIN as f64 + u * pw, (height - MARGIN) as f64 - v * ph)
    };
    let grid = Rgb([225, 225, 225]);
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        let (x, _) = to_px(axes.x.0 + t * (axes.x.1 - axes.x.0), axes.y.0);
        let (_, y) = to_px(axes.x.0, axes.y.0 + t * (axes.y.1 - axes.y.0));
        line(&mut img, (x, MARGIN as f64), (x, (height - MARGIN) as f64), grid);
        line(&mut img, (MARGIN as f64, y), ((width - MARGIN) as f64, y), grid);
    }
    let black = Rgb([0, 0, 0]);
    let (l, r, t, b) = (MARGIN as f64, (width - MARGIN) as f64, MARGIN as f64, (height - MARGIN) as f64);
    line(&mut img, (l, b), (r, b), black);
    line(&mut img, (l, t), (l, b), black);
    for (i, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[i % PALETTE.len()]);
        for w in s.points.windows(2) {
            line(&mut img, to_px(w[0].0, w[0].1), to_px(w[1].0, w[1].1), color);
        }
        if let [only] = s.points.as_slice() {
            let p = to_px(only.0, only.1);
            line(&mut img, (p.0 - 2.0, p.1), (p.0 + 2.0, p.1), color);
        }
    }
    Ok(img)
}

pub fn save(series: &[Series], axes: Axes, width: u32, height: u32, path: &Path) -> Result<()> {
    render(series, axes, width, height)?.save(path)?;
    Ok(())
}

/// Sampled straight segment; points off the canvas are dropped.
fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = (a.0 + t * (b.0 - a.0)).round();
        let y = (a.1 + t * (b.1 - a.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}
