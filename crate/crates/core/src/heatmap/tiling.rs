//! Multi-resolution heatmaps: overlapping sub-images at several window sizes,
//! each run through the backend, merged by per-pixel maximum.

use std::collections::{HashMap, HashSet};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Heatmap, Resampler, Scale};
use crate::backend::{crop_to_input, Backend};
use crate::error::{Error, Result};
use crate::geometry::PixelRect;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TilingConfig {
    /// Square window sides; `None` uses [`default_window_sides`].
    pub window_sides: Option<Vec<u32>>,
    /// Window step as a fraction of the window side.
    pub stride_ratio: f64,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            window_sides: None,
            stride_ratio: 0.5,
        }
    }
}

impl TilingConfig {
    pub fn sides_for(&self, width: u32, height: u32) -> Vec<u32> {
        self.window_sides
            .clone()
            .unwrap_or_else(|| default_window_sides(width, height))
    }
}

/// `{m, m/2, m/4}` for the shorter image side `m`, dropping zero sides.
pub fn default_window_sides(width: u32, height: u32) -> Vec<u32> {
    let m = width.min(height);
    let mut sides: Vec<u32> = [m, m / 2, m / 4].into_iter().filter(|&s| s > 0).collect();
    sides.dedup();
    sides
}

/// Offsets `0, step, 2*step, ...` plus a final offset flush with the far edge.
pub(crate) fn window_offsets(extent: u32, side: u32, step: u32) -> Vec<u32> {
    let last = extent - side;
    let mut offsets: Vec<u32> = (0..=last).step_by(step as usize).collect();
    if offsets.last() != Some(&last) {
        offsets.push(last);
    }
    offsets
}

pub(crate) fn window_step(side: u32, ratio: f64) -> u32 {
    ((side as f64 * ratio).floor() as u32).max(1)
}

/// Sliding-window placements for every side in `window_sides`, stepping by
/// `floor(side * stride_ratio)` with the last row and column clamped to the
/// image edge. The full-image rectangle is always the first placement.
pub fn tile_image(
    width: u32,
    height: u32,
    window_sides: &[u32],
    stride_ratio: f64,
) -> Result<Vec<PixelRect>> {
    if window_sides.is_empty() {
        return Err(Error::invalid("tiling needs at least one window side"));
    }
    if !(stride_ratio > 0.0 && stride_ratio <= 1.0) {
        return Err(Error::invalid(format!("stride ratio {stride_ratio} must be in (0, 1]")));
    }
    if width == 0 || height == 0 {
        return Err(Error::invalid("cannot tile an empty image"));
    }
    let full = PixelRect::new(0, 0, width, height);
    let mut seen = HashSet::from([full]);
    let mut rects = vec![full];
    for &side in window_sides {
        if side == 0 || side > width.min(height) {
            return Err(Error::invalid(format!(
                "window side {side} does not fit a {width}x{height} image"
            )));
        }
        let step = window_step(side, stride_ratio);
        let xs = window_offsets(width, side, step);
        for y in window_offsets(height, side, step) {
            for &x in &xs {
                let r = PixelRect::new(x, y, side, side);
                if seen.insert(r) {
                    rects.push(r);
                }
            }
        }
    }
    Ok(rects)
}

/// A sub-image's response heatmap and where it sits in the full image.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlacement {
    pub rect: PixelRect,
    pub heatmap: Heatmap,
}

/// Per-pixel maximum over all tiles, each first resized to its rectangle.
/// Pixels no tile covers are zero.
pub fn merge_max(tiles: &[TilePlacement], canvas_w: usize, canvas_h: usize) -> Result<Heatmap> {
    if tiles.is_empty() {
        return Err(Error::invalid("merge_max needs at least one tile"));
    }
    if canvas_w == 0 || canvas_h == 0 {
        return Err(Error::invalid("canvas must be non-empty"));
    }
    let scale = if tiles.iter().all(|t| t.heatmap.scale() == Scale::Byte) {
        Scale::Byte
    } else {
        Scale::Raw
    };
    let mut canvas = vec![0.0f64; canvas_w * canvas_h];
    let mut resamplers: HashMap<(usize, usize, usize, usize), Resampler> = HashMap::new();
    let mut buf = Vec::new();
    for tile in tiles {
        let r = tile.rect;
        let (rx, ry, rw, rh) = (r.x as usize, r.y as usize, r.w as usize, r.h as usize);
        if rw == 0 || rh == 0 || rx + rw > canvas_w || ry + rh > canvas_h {
            return Err(Error::invalid(format!(
                "tile {r:?} does not fit the {canvas_w}x{canvas_h} canvas"
            )));
        }
        let h = &tile.heatmap;
        let values: &[f64] = if (h.width(), h.height()) == (rw, rh) {
            h.values()
        } else {
            let key = (h.width(), h.height(), rw, rh);
            let resampler = match resamplers.entry(key) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(Resampler::new(h.width(), h.height(), rw, rh)?)
                }
            };
            let ceiling = if h.scale() == Scale::Byte { 255.0 } else { f64::INFINITY };
            resampler.apply_into(h.values(), ceiling, &mut buf);
            &buf
        };
        for (y, src_row) in values.chunks_exact(rw).enumerate() {
            let start = (ry + y) * canvas_w + rx;
            for (dst, &v) in canvas[start..start + rw].iter_mut().zip(src_row) {
                if v > *dst {
                    *dst = v;
                }
            }
        }
    }
    Ok(Heatmap::from_parts(canvas_w, canvas_h, canvas, scale))
}

/// Raw multi-resolution response of `channel` over `image`: tile, run each
/// tile through the backend, keep the channel, and merge by maximum.
pub fn osc_heatmap(
    backend: &dyn Backend,
    image: &RgbImage,
    channel: usize,
    tiling: &TilingConfig,
) -> Result<Heatmap> {
    let (w, h) = image.dimensions();
    let sides = tiling.sides_for(w, h);
    let rects = tile_image(w, h, &sides, tiling.stride_ratio)?;
    let side = backend.descriptor().input_side;
    let run = |rect: &PixelRect| -> Result<TilePlacement> {
        let input = crop_to_input(image, *rect, side);
        let heatmap = backend.infer_features(&input)?.channel(channel)?;
        Ok(TilePlacement {
            rect: *rect,
            heatmap,
        })
    };
    let tiles: Vec<TilePlacement> = if backend.descriptor().concurrency_safe {
        rects.par_iter().map(run).collect::<Result<_>>()?
    } else {
        rects.iter().map(run).collect::<Result<_>>()?
    };
    merge_max(&tiles, w as usize, h as usize)
}
