//! The two-stage detector: multi-resolution heatmap, heatmap proposals,
//! binary classification of each proposal, and greedy non-maximum suppression.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{crop_to_input, Backend};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, PixelRect};
use crate::heatmap::{normalize_byte, osc_heatmap, Heatmap, TilingConfig};
use crate::proposal::{scan_proposals, Proposal, ProposalConfig};

/// Proposals sent to the classifier per backend call.
const CLASSIFY_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    /// Face probability in `[0, 1]`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Channel of the feature layer used as the object-specific heatmap.
    pub osc_channel: usize,
    pub tiling: TilingConfig,
    pub proposal: ProposalConfig,
    pub nms_iou: f64,
    pub accept_score: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            osc_channel: 196,
            tiling: TilingConfig::default(),
            proposal: ProposalConfig::default(),
            nms_iou: 0.3,
            accept_score: 0.5,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::invalid(format!("nms_iou {} must be in (0, 1)", self.nms_iou)));
        }
        if !(0.0..=1.0).contains(&self.accept_score) {
            return Err(Error::invalid(format!(
                "accept_score {} must be in [0, 1]",
                self.accept_score
            )));
        }
        if !(self.tiling.stride_ratio > 0.0 && self.tiling.stride_ratio <= 1.0) {
            return Err(Error::invalid("tiling stride ratio must be in (0, 1]"));
        }
        self.proposal.validate()
    }
}

/// Crops every box, resizes it to the network input, scores the batch, and
/// keeps boxes scoring at least `accept_score`. Input order is preserved.
pub fn classify_proposals(
    backend: &dyn Backend,
    image: &RgbImage,
    boxes: &[BoundingBox],
    accept_score: f64,
) -> Result<Vec<Detection>> {
    let (w, h) = image.dimensions();
    let side = backend.descriptor().input_side;
    let score_chunk = |(chunk_idx, chunk): (usize, &[BoundingBox])| -> Result<Vec<f64>> {
        let base = chunk_idx * CLASSIFY_BATCH;
        let crops = chunk
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let rect = PixelRect::covering(b, w, h).ok_or_else(|| Error::Proposal {
                    index: base + i,
                    source: Box::new(Error::invalid("box lies outside the image")),
                })?;
                Ok(crop_to_input(image, rect, side))
            })
            .collect::<Result<Vec<_>>>()?;
        backend.infer_class_scores(&crops).map_err(|e| {
            let index = match &e {
                Error::WrongInputSize { index, .. } => base + index,
                _ => base,
            };
            Error::Proposal {
                index,
                source: Box::new(e),
            }
        })
    };
    let chunks: Vec<(usize, &[BoundingBox])> = boxes.chunks(CLASSIFY_BATCH).enumerate().collect();
    let scores: Vec<Vec<f64>> = if backend.descriptor().concurrency_safe {
        chunks.into_par_iter().map(score_chunk).collect::<Result<_>>()?
    } else {
        chunks.into_iter().map(score_chunk).collect::<Result<_>>()?
    };
    Ok(boxes
        .iter()
        .zip(scores.into_iter().flatten())
        .filter(|(_, s)| *s >= accept_score)
        .map(|(b, score)| Detection { bbox: *b, score })
        .collect())
}

/// Greedy non-maximum suppression: repeatedly keep the best remaining
/// detection and drop every other with IoU above `iou_threshold`. Ties in
/// score keep input order. Output is sorted by score, highest first.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = dets[i];
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Intermediate products of one detector run.
#[derive(Debug, Clone)]
pub struct DetectionTrace {
    /// Merged multi-resolution heatmap, byte scale.
    pub heatmap: Heatmap,
    pub proposals: Vec<Proposal>,
    /// Proposals that passed the classifier, before NMS.
    pub accepted: Vec<Detection>,
    pub detections: Vec<Detection>,
}

pub fn detect_with_trace(
    backend: &dyn Backend,
    image: &RgbImage,
    cfg: &DetectConfig,
) -> Result<DetectionTrace> {
    cfg.validate()?;
    let raw = osc_heatmap(backend, image, cfg.osc_channel, &cfg.tiling)?;
    let heatmap = normalize_byte(&raw);
    let proposals = scan_proposals(&heatmap, &cfg.proposal)?;
    let boxes: Vec<BoundingBox> = proposals.iter().map(|p| p.bbox).collect();
    let accepted = classify_proposals(backend, image, &boxes, cfg.accept_score)?;
    let detections = nms(&accepted, cfg.nms_iou);
    Ok(DetectionTrace {
        heatmap,
        proposals,
        accepted,
        detections,
    })
}

pub fn detect(backend: &dyn Backend, image: &RgbImage, cfg: &DetectConfig) -> Result<Vec<Detection>> {
    Ok(detect_with_trace(backend, image, cfg)?.detections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{SyntheticBackend, SyntheticConfig};
    use crate::synthetic::{render_scene, Disc, SceneSpec};
    use proptest::prelude::*;

    fn det(x: f64, y: f64, s: f64, score: f64) -> Detection {
        Detection {
            bbox: BoundingBox::square(x, y, s).unwrap(),
            score,
        }
    }

    /// Independent reference: mark suppressed detections in an n x n sweep.
    fn reference_nms(dets: &[Detection], t: f64) -> Vec<Detection> {
        let n = dets.len();
        let mut rank: Vec<usize> = (0..n).collect();
        // insertion sort keeps equal scores in input order
        for i in 1..n {
            let mut j = i;
            while j > 0 && dets[rank[j - 1]].score < dets[rank[j]].score {
                rank.swap(j - 1, j);
                j -= 1;
            }
        }
        let mut suppressed = vec![false; n];
        let mut out = Vec::new();
        for a in 0..n {
            if suppressed[a] {
                continue;
            }
            let da = dets[rank[a]];
            out.push(da);
            for b in a + 1..n {
                let db = dets[rank[b]];
                let ix = (da.bbox.right().min(db.bbox.right()) - da.bbox.x.max(db.bbox.x)).max(0.0);
                let iy = (da.bbox.bottom().min(db.bbox.bottom()) - da.bbox.y.max(db.bbox.y)).max(0.0);
                let inter = ix * iy;
                let union = da.bbox.area() + db.bbox.area() - inter;
                if inter / union > t {
                    suppressed[b] = true;
                }
            }
        }
        out
    }

    #[test]
    fn nms_examples() {
        let one = det(0.0, 0.0, 10.0, 0.7);
        assert_eq!(nms(&[one], 0.3), vec![one]);
        let pair = [det(0.0, 0.0, 10.0, 0.8), det(0.0, 0.0, 10.0, 0.9)];
        assert_eq!(nms(&pair, 0.3), vec![pair[1]]);
        assert!(nms(&[], 0.3).is_empty());
        // equal scores: earlier input wins
        let tie = [det(0.0, 0.0, 10.0, 0.5), det(1.0, 0.0, 10.0, 0.5)];
        assert_eq!(nms(&tie, 0.3), vec![tie[0]]);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        proptest::collection::vec(
            (0.0..100.0f64, 0.0..100.0f64, 5.0..40.0f64, 0.0..1.0f64)
                .prop_map(|(x, y, s, score)| det(x, y, s, (score * 20.0).round() / 20.0)),
            0..60,
        )
    }

    proptest! {
        #[test]
        fn nms_matches_reference(dets in arb_dets(), t in 0.05..0.95f64) {
            prop_assert_eq!(nms(&dets, t), reference_nms(&dets, t));
        }

        #[test]
        fn nms_output_is_antichain_subset(dets in arb_dets(), t in 0.05..0.95f64) {
            let out = nms(&dets, t);
            for (i, a) in out.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &out[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= t);
                    prop_assert!(a.score >= b.score);
                }
            }
        }
    }

    fn backend() -> SyntheticBackend {
        SyntheticBackend::new(SyntheticConfig::default()).unwrap()
    }

    #[test]
    fn classify_keeps_disc_and_drops_background() {
        let b = backend();
        let disc = Disc { cx: 100.0, cy: 90.0, radius: 40.0 };
        let img = render_scene(&SceneSpec::new(320, 240, vec![disc], 4));
        let tight = disc.bounding_box();
        let blank = BoundingBox::square(220.0, 140.0, 80.0).unwrap();
        let dets = classify_proposals(&b, &img, &[blank, tight], 0.5).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, tight);
        assert!(dets[0].score >= 0.9, "tight crop scored {}", dets[0].score);
        assert!(classify_proposals(&b, &img, &[], 0.5).unwrap().is_empty());
    }

    #[test]
    fn classify_reports_offending_index() {
        let b = backend();
        let img = RgbImage::new(100, 100);
        let boxes = [
            BoundingBox::square(0.0, 0.0, 50.0).unwrap(),
            BoundingBox::square(500.0, 500.0, 50.0).unwrap(),
        ];
        match classify_proposals(&b, &img, &boxes, 0.5) {
            Err(Error::Proposal { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected proposal error, got {other:?}"),
        }
    }

    #[test]
    fn blank_image_yields_nothing() {
        let b = backend();
        let img = RgbImage::from_pixel(200, 200, image::Rgb([90, 90, 90]));
        let cfg = DetectConfig {
            osc_channel: b.planted_channel(),
            ..DetectConfig::default()
        };
        assert!(detect(&b, &img, &cfg).unwrap().is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = DetectConfig { nms_iou: 1.0, ..DetectConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DetectConfig { accept_score: 1.5, ..DetectConfig::default() };
        assert!(bad.validate().is_err());
        assert!(DetectConfig::default().validate().is_ok());
    }
}
