//! Object-response heatmaps: the upsampled activation of one convolutional
//! channel, interpreted as an intensity surface over the input image.

mod ranking;
mod resample;
pub(crate) mod tiling;

use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub use ranking::{rank_channels, AnnotatedImage, ChannelScore};
pub use resample::{resize_bicubic, Resampler};
pub use tiling::{
    default_window_sides, merge_max, osc_heatmap, tile_image, TilePlacement, TilingConfig,
};

/// Gray levels used by [`quantize`] unless configured otherwise.
pub const DEFAULT_QUANTIZE_LEVELS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Activation units, unbounded above.
    Raw,
    /// Values in `[0, 255]`.
    Byte,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    scale: Scale,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, scale: Scale) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("heatmap dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "heatmap {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        let ceiling = match scale {
            Scale::Raw => f64::INFINITY,
            Scale::Byte => 255.0,
        };
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= ceiling)) {
            return Err(Error::invalid(format!("heatmap value {v} out of range for {scale:?}")));
        }
        Ok(Heatmap {
            width,
            height,
            values,
            scale,
        })
    }

    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>, scale: Scale) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Heatmap {
            width,
            height,
            values,
            scale,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64, scale: Scale) -> Self {
        Heatmap::from_parts(width, height, vec![value; width * height], scale)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        scale: Scale,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Heatmap::from_parts(width, height, values, scale)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// 8-bit grayscale rendering. Raw maps are min-max normalized first.
    pub fn to_gray_image(&self) -> GrayImage {
        let byte;
        let src = match self.scale {
            Scale::Byte => self,
            Scale::Raw => {
                byte = normalize_byte(self);
                &byte
            }
        };
        let pixels = src.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, pixels)
            .expect("buffer matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Mean intensity over the pixels of `b`, after clipping `b` to the map.
pub fn face_score(h: &Heatmap, b: &BoundingBox) -> Result<f64> {
    let span = b.pixel_span(h.width, h.height).ok_or(Error::BoxOutsideHeatmap {
        width: h.width,
        height: h.height,
    })?;
    let sum: f64 = (span.y0..span.y1)
        .map(|y| h.row(y)[span.x0..span.x1].iter().sum::<f64>())
        .sum();
    Ok(sum / span.count() as f64)
}

/// Pixel mask of the union of `boxes`.
pub(crate) fn coverage_mask(width: usize, height: usize, boxes: &[BoundingBox]) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    for span in boxes.iter().filter_map(|b| b.pixel_span(width, height)) {
        for y in span.y0..span.y1 {
            mask[y * width + span.x0..y * width + span.x1].fill(true);
        }
    }
    mask
}

/// Mean intensity over pixels not covered by any of `boxes`.
pub fn outside_score(h: &Heatmap, boxes: &[BoundingBox]) -> Result<f64> {
    let mask = coverage_mask(h.width, h.height, boxes);
    masked_mean(&h.values, &mask).ok_or(Error::NoOutsidePixels)
}

pub(crate) fn masked_mean(values: &[f64], covered: &[bool]) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .zip(covered)
        .filter(|(_, &c)| !c)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Linear min-max map onto `[0, 255]`; a constant map becomes all zeros.
pub fn normalize_byte(h: &Heatmap) -> Heatmap {
    let (lo, hi) = h
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let values = if range > 0.0 {
        h.values
            .iter()
            .map(|&v| ((v - lo) / range * 255.0).clamp(0.0, 255.0))
            .collect()
    } else {
        vec![0.0; h.values.len()]
    };
    Heatmap::from_parts(h.width, h.height, values, Scale::Byte)
}

/// Uniform gray-level quantization of a byte-scale map into `levels` values.
pub fn quantize(h: &Heatmap, levels: u32) -> Result<Heatmap> {
    if levels < 2 {
        return Err(Error::invalid(format!("quantization needs at least 2 levels, got {levels}")));
    }
    if h.scale != Scale::Byte {
        return Err(Error::invalid("quantize expects a byte-scale heatmap"));
    }
    let l = levels as f64;
    let values = h.values.iter().map(|&v| quantize_value(v, l)).collect();
    Ok(Heatmap::from_parts(h.width, h.height, values, Scale::Byte))
}

// Bins are read at v + 0.5: with plain floor(v·L/256) some rounded outputs
// fall back into the bin below (v=18, L=28 gives 9 then 0).
fn quantize_value(v: f64, levels: f64) -> f64 {
    let bin = ((v + 0.5) * levels / 256.0).floor().min(levels - 1.0).max(0.0);
    (bin * 255.0 / (levels - 1.0)).round()
}
