//! Deterministic stand-in for a fine-tuned network.
//!
//! One "planted" channel is the rectified normalized cross-correlation of the
//! grayscale input with a soft disc template, sampled on the feature grid.
//! Every other channel is seeded noise in `[0, 0.1 * max(planted))`. The class
//! score is `logistic(10 * (c - 0.5))`, where `c` is the best correlation of the
//! input against a near-inscribed disc over shifts of up to 3 of 32 working
//! pixels. Only pixels within 0.55 of the side from the center take part.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_input, Backend, BackendDescriptor, FeatureMaps, DEFAULT_INPUT_SIDE};
use crate::error::{Error, Result};

/// Working-resolution pixels per feature cell.
const CELL_PIXELS: usize = 4;
/// Feature template radius, as a fraction of the input side.
const FEATURE_DISC_FRACTION: f64 = 0.15;
/// Half-size of the correlation patch, in working pixels.
const PATCH_HALF: usize = 12;
/// Working resolution of the classifier view.
const CLASSIFIER_SIDE: usize = 32;
/// Classifier disc radius and correlation support radius, as fractions of
/// the view side. The band between them is expected to be background.
const CLASS_DISC_FRACTION: f64 = 0.47;
const CLASS_SUPPORT_FRACTION: f64 = 0.55;
/// Shift search radius of the classifier, in working pixels. Close to half
/// the default proposal stride, so off-grid windows can still line up.
const CLASSIFIER_SHIFT: isize = 3;
const EDGE_SOFTNESS: f64 = 1.0;
const NOISE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub planted_channel: usize,
    pub channels: usize,
    pub grid: usize,
    pub input_side: u32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0x05C_FACE,
            planted_channel: 196,
            channels: 256,
            grid: 13,
            input_side: DEFAULT_INPUT_SIDE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    config: SyntheticConfig,
    descriptor: BackendDescriptor,
    feature_template: Template,
    class_template: Template,
}

/// Zero-mean, unit-norm correlation template.
#[derive(Debug, Clone)]
struct Template {
    side: usize,
    weights: Vec<f64>,
    mask: Vec<bool>,
}

impl Template {
    fn soft_disc(side: usize, radius: f64) -> Self {
        Self::soft_disc_within(side, radius, f64::INFINITY)
    }

    /// Soft disc where only pixels within `outer` of the center take part.
    fn soft_disc_within(side: usize, radius: f64, outer: f64) -> Self {
        let c = (side as f64 - 1.0) / 2.0;
        let dist = |k: usize| {
            let (x, y) = ((k % side) as f64, (k / side) as f64);
            ((x - c).powi(2) + (y - c).powi(2)).sqrt()
        };
        let mask: Vec<bool> = (0..side * side).map(|k| dist(k) <= outer).collect();
        let mut weights: Vec<f64> = (0..side * side)
            .map(|k| 1.0 / (1.0 + ((dist(k) - radius) / EDGE_SOFTNESS).exp()))
            .collect();
        let n = mask.iter().filter(|&&m| m).count() as f64;
        let mean = weights.iter().zip(&mask).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / n;
        for (w, &m) in weights.iter_mut().zip(&mask) {
            *w = if m { *w - mean } else { 0.0 };
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        weights.iter_mut().for_each(|w| *w /= norm);
        Template { side, weights, mask }
    }

    /// Normalized cross-correlation with the patch whose top-left corner is
    /// `(x0, y0)` in `img`; out-of-range coordinates clamp to the edge.
    fn ncc(&self, img: &[f64], img_side: usize, x0: isize, y0: isize) -> f64 {
        let last = img_side as isize - 1;
        let (mut n, mut dot, mut sum, mut sum_sq) = (0.0, 0.0, 0.0, 0.0);
        for ty in 0..self.side {
            let y = (y0 + ty as isize).clamp(0, last) as usize;
            let row = &img[y * img_side..(y + 1) * img_side];
            let span = ty * self.side..(ty + 1) * self.side;
            for (tx, (&t, &m)) in self.weights[span.clone()].iter().zip(&self.mask[span]).enumerate() {
                if !m {
                    continue;
                }
                let p = row[(x0 + tx as isize).clamp(0, last) as usize];
                n += 1.0;
                dot += t * p;
                sum += p;
                sum_sq += p * p;
            }
        }
        let var = sum_sq - sum * sum / n;
        if var <= 1e-12 {
            0.0
        } else {
            dot / var.sqrt()
        }
    }
}

impl SyntheticBackend {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        if config.channels == 0 || config.planted_channel >= config.channels {
            return Err(Error::invalid(format!(
                "planted channel {} outside 0..{}",
                config.planted_channel, config.channels
            )));
        }
        if config.grid == 0 || config.input_side < config.grid as u32 {
            return Err(Error::invalid("synthetic grid must be positive and fit the input"));
        }
        let work = config.grid * CELL_PIXELS;
        let feature_radius = FEATURE_DISC_FRACTION * work as f64;
        let descriptor = BackendDescriptor {
            input_side: config.input_side,
            feature_layer: "synthetic_disc".into(),
            class_count: 2,
            concurrency_safe: true,
        };
        Ok(SyntheticBackend {
            feature_template: Template::soft_disc(2 * PATCH_HALF, feature_radius),
            class_template: Template::soft_disc_within(
                CLASSIFIER_SIDE,
                CLASS_DISC_FRACTION * CLASSIFIER_SIDE as f64,
                CLASS_SUPPORT_FRACTION * CLASSIFIER_SIDE as f64,
            ),
            config,
            descriptor,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn planted_channel(&self) -> usize {
        self.config.planted_channel
    }

    /// The planted channel's response grid, row-major `grid x grid`.
    pub fn planted_response(&self, image: &RgbImage) -> Vec<f64> {
        let grid = self.config.grid;
        let work = grid * CELL_PIXELS;
        let gray = area_resample(&grayscale(image), image.width() as usize, image.height() as usize, work, work);
        let mut out = Vec::with_capacity(grid * grid);
        for gy in 0..grid {
            for gx in 0..grid {
                let x0 = (gx * CELL_PIXELS + CELL_PIXELS / 2) as isize - PATCH_HALF as isize;
                let y0 = (gy * CELL_PIXELS + CELL_PIXELS / 2) as isize - PATCH_HALF as isize;
                out.push(self.feature_template.ncc(&gray, work, x0, y0).max(0.0));
            }
        }
        out
    }

    /// Best correlation of the frame with the classifier disc template.
    pub fn class_correlation(&self, image: &RgbImage) -> f64 {
        let side = CLASSIFIER_SIDE;
        let gray = area_resample(&grayscale(image), image.width() as usize, image.height() as usize, side, side);
        let mut best = f64::NEG_INFINITY;
        let r = CLASSIFIER_SHIFT;
        for dy in -r..=r {
            for dx in -r..=r {
                best = best.max(self.class_template.ncc(&gray, side, dx, dy));
            }
        }
        best
    }

    fn noise_rng(&self, image: &RgbImage) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ fnv1a(image.as_raw()))
    }
}

impl Backend for SyntheticBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn infer_features(&self, image: &RgbImage) -> Result<FeatureMaps> {
        check_input(image, self.config.input_side, 0)?;
        let grid = self.config.grid;
        let cells = grid * grid;
        let planted = self.planted_response(image);
        let amplitude = NOISE_FRACTION * planted.iter().copied().fold(0.0, f64::max);
        let mut rng = self.noise_rng(image);
        let mut values = Vec::with_capacity(self.config.channels * cells);
        for c in 0..self.config.channels {
            if c == self.config.planted_channel {
                values.extend_from_slice(&planted);
            } else {
                values.extend((0..cells).map(|_| rng.gen::<f64>() * amplitude));
            }
        }
        FeatureMaps::new(self.config.channels, grid, grid, values)
    }

    fn infer_class_scores(&self, batch: &[RgbImage]) -> Result<Vec<f64>> {
        batch
            .iter()
            .enumerate()
            .map(|(i, img)| {
                check_input(img, self.config.input_side, i)?;
                Ok(logistic(10.0 * (self.class_correlation(img) - 0.5)))
            })
            .collect()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn grayscale(image: &RgbImage) -> Vec<f64> {
    image
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect()
}

/// Per-axis box-filter weights: each output cell averages the source span it
/// covers, with fractional weights at the span ends.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let (lo, hi) = (d as f64 * scale, (d + 1) as f64 * scale);
            let mut taps = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src {
                let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((s, overlap / scale));
                }
                s += 1;
            }
            taps
        })
        .collect()
}

fn area_resample(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let cols = area_weights(sw, dw);
    let rows = area_weights(sh, dh);
    let mut tmp = vec![0.0; sh * dw];
    for y in 0..sh {
        let row = &src[y * sw..(y + 1) * sw];
        for (x, taps) in cols.iter().enumerate() {
            tmp[y * dw + x] = taps.iter().map(|&(s, w)| w * row[s]).sum();
        }
    }
    let mut out = vec![0.0; dw * dh];
    for (y, taps) in rows.iter().enumerate() {
        for &(s, w) in taps {
            let src_row = &tmp[s * dw..(s + 1) * dw];
            for (o, v) in out[y * dw..(y + 1) * dw].iter_mut().zip(src_row) {
                *o += w * v;
            }
        }
    }
    out
}
