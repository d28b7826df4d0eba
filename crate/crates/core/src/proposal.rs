//! Heatmap-driven candidate windows: a multi-scale sliding window keeps every
//! square whose mean heatmap intensity exceeds a threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::heatmap::tiling::window_offsets;
use crate::heatmap::{face_score, Heatmap};

/// Byte-scale face-score a window must exceed to become a proposal.
pub const DEFAULT_PROPOSAL_THRESHOLD: f64 = 80.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub threshold: f64,
    /// Square window sides; `None` uses [`default_proposal_sides`].
    pub window_sides: Option<Vec<u32>>,
    pub stride_ratio: f64,
    pub max_proposals: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            threshold: DEFAULT_PROPOSAL_THRESHOLD,
            window_sides: None,
            stride_ratio: 0.25,
            max_proposals: 2000,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 255.0) {
            return Err(Error::invalid(format!("threshold {} must be in (0, 255]", self.threshold)));
        }
        if !(self.stride_ratio > 0.0 && self.stride_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "stride ratio {} must be in (0, 1]",
                self.stride_ratio
            )));
        }
        if matches!(&self.window_sides, Some(s) if s.is_empty() || s.contains(&0)) {
            return Err(Error::invalid("proposal window sides must be non-empty and positive"));
        }
        Ok(())
    }

    pub fn sides_for(&self, width: usize, height: usize) -> Vec<u32> {
        self.window_sides
            .clone()
            .unwrap_or_else(|| default_proposal_sides(width as u32, height as u32))
    }
}

/// Geometric ladder `32 * sqrt(2)^k` up to the shorter image side.
pub fn default_proposal_sides(width: u32, height: u32) -> Vec<u32> {
    let m = width.min(height);
    if m < 32 {
        return vec![m.max(1)];
    }
    let mut sides = Vec::new();
    let mut k = 0;
    loop {
        let s = (32.0 * 2f64.powf(k as f64 / 2.0)).round() as u32;
        if s > m {
            break;
        }
        sides.push(s);
        k += 1;
    }
    sides
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Summed-area table for O(1) rectangle sums.
pub struct IntegralImage {
    width: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(h: &Heatmap) -> Self {
        let (w, ht) = (h.width(), h.height());
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (ht + 1)];
        for y in 0..ht {
            let mut row_sum = 0.0;
            for (x, &v) in h.row(y).iter().enumerate() {
                row_sum += v;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage { width: w, sums }
    }

    /// Sum over pixels `[x0, x1) x [y0, y1)`.
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0] + self.sums[y0 * s + x0]
    }
}

/// Window stride: `round(side * ratio)`, at least one pixel.
pub fn proposal_step(side: u32, ratio: f64) -> u32 {
    ((side as f64 * ratio).round() as u32).max(1)
}

/// Every sliding window whose face-score is strictly above the threshold,
/// sorted by score (highest first, enumeration order on ties) and truncated
/// at `max_proposals`. Window sides larger than the heatmap are skipped.
pub fn scan_proposals(h: &Heatmap, cfg: &ProposalConfig) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    let (w, ht) = (h.width(), h.height());
    let integral = IntegralImage::new(h);
    // integral sums carry ~1e-10 rounding; settle near-threshold windows exactly
    const BAND: f64 = 1e-6;
    let mut out = Vec::new();
    for side in cfg.sides_for(w, ht) {
        if side as usize > w.min(ht) {
            continue;
        }
        let s = side as usize;
        let step = proposal_step(side, cfg.stride_ratio);
        let xs = window_offsets(w as u32, side, step);
        for y in window_offsets(ht as u32, side, step) {
            let y = y as usize;
            for &x in &xs {
                let x = x as usize;
                let approx = integral.sum(x, y, x + s, y + s) / (s * s) as f64;
                if approx < cfg.threshold - BAND {
                    continue;
                }
                let bbox = BoundingBox {
                    x: x as f64,
                    y: y as f64,
                    w: s as f64,
                    h: s as f64,
                };
                let score = if approx > cfg.threshold + BAND {
                    approx
                } else {
                    face_score(h, &bbox)?
                };
                if score > cfg.threshold {
                    out.push(Proposal { bbox, score });
                }
            }
        }
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out.truncate(cfg.max_proposals);
    Ok(out)
}
