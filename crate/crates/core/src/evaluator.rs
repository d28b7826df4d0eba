//! Benchmark scoring: one-to-one matching of detections to ground truth,
//! FDDB-style discrete and continuous ROC curves, and PASCAL-style average
//! precision.

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::{
    extend_box_vertical, inscribe_ellipse, iou, region_iou, BoundingBox, Canvas, Ellipse, Region,
    DEFAULT_VERTICAL_EXTENSION,
};

/// A detection and a ground truth match only when their overlap exceeds this.
pub const MATCH_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

impl MatchResult {
    /// Overlap of each detection's match, indexed by detection.
    pub fn overlap_by_detection(&self, n: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; n];
        for p in &self.pairs {
            out[p.detection] = Some(p.overlap);
        }
        out
    }
}

/// Policy that pairs detections with ground truth regions.
pub trait Matcher: Send + Sync {
    /// `dets` are sorted by score, highest first.
    fn match_regions(&self, dets: &[Region], gts: &[Region], canvas: Canvas) -> MatchResult;
}

/// Each detection, in score order, claims the unclaimed ground truth it
/// overlaps most, if that overlap exceeds the threshold.
#[derive(Debug, Clone, Copy)]
pub struct GreedyMatcher {
    pub min_overlap: f64,
}

impl Default for GreedyMatcher {
    fn default() -> Self {
        GreedyMatcher {
            min_overlap: MATCH_OVERLAP,
        }
    }
}

impl Matcher for GreedyMatcher {
    fn match_regions(&self, dets: &[Region], gts: &[Region], canvas: Canvas) -> MatchResult {
        let mut claimed = vec![false; gts.len()];
        let mut result = MatchResult::default();
        for (d, det) in dets.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if claimed[g] || !extents_touch(det, gt) {
                    continue;
                }
                // a region with no pixels on the canvas overlaps nothing
                let overlap = region_iou(det, gt, canvas).unwrap_or(0.0);
                if overlap > self.min_overlap && best.map_or(true, |(_, o)| overlap > o) {
                    best = Some((g, overlap));
                }
            }
            match best {
                Some((g, overlap)) => {
                    claimed[g] = true;
                    result.pairs.push(MatchPair {
                        detection: d,
                        ground_truth: g,
                        overlap,
                    });
                }
                None => result.unmatched_detections.push(d),
            }
        }
        result.unmatched_ground_truths = (0..gts.len()).filter(|&g| !claimed[g]).collect();
        result
    }
}

fn extents_touch(a: &Region, b: &Region) -> bool {
    let (ax0, ay0, ax1, ay1) = a.extent();
    let (bx0, by0, bx1, by1) = b.extent();
    ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
}

/// Greedy one-to-one matching at overlap > 0.5 with rasterized IoU.
pub fn match_detections(dets: &[Region], gts: &[Region], canvas: Canvas) -> MatchResult {
    GreedyMatcher::default().match_regions(dets, gts, canvas)
}

/// Square detection to the upright ellipse used against elliptical ground
/// truth: stretch the box vertically by 40% about its center, then inscribe.
pub fn detection_to_ellipse(d: &Detection) -> Ellipse {
    let tall = extend_box_vertical(&d.bbox, DEFAULT_VERTICAL_EXTENSION)
        .expect("constant extension factor is valid");
    inscribe_ellipse(&tall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FddbScore {
    pub discrete_tp: usize,
    pub continuous_sum: f64,
    pub discrete_rate: f64,
    pub continuous_rate: f64,
}

/// Discrete (matched count) and continuous (summed overlap) scores.
pub fn fddb_scores(matches: &[MatchResult], total_gt: usize) -> Result<FddbScore> {
    if total_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let discrete_tp: usize = matches.iter().map(|m| m.pairs.len()).sum();
    let continuous_sum: f64 = matches.iter().flat_map(|m| &m.pairs).map(|p| p.overlap).sum();
    Ok(FddbScore {
        discrete_tp,
        continuous_sum,
        discrete_rate: discrete_tp as f64 / total_gt as f64,
        continuous_rate: continuous_sum / total_gt as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Discrete,
    Continuous,
}

/// How detections are turned into regions before matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionShape {
    Box,
    Ellipse,
}

impl DetectionShape {
    pub fn region(&self, d: &Detection) -> Region {
        match self {
            DetectionShape::Box => Region::Box(d.bbox),
            DetectionShape::Ellipse => Region::Ellipse(detection_to_ellipse(d)),
        }
    }
}

/// Everything needed to score one image.
#[derive(Debug, Clone)]
pub struct ImageEval {
    pub image_id: String,
    pub fold: usize,
    pub canvas: Canvas,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fp_count: usize,
    pub tpr: f64,
}

/// Operating points swept over score thresholds, highest threshold first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub points: Vec<CurvePoint>,
}

impl EvalCurve {
    pub fn score_thresholds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.threshold).collect()
    }

    /// Best TPR reachable with at most `max_fp` false positives.
    pub fn tpr_at(&self, max_fp: usize) -> f64 {
        self.points
            .iter()
            .filter(|p| p.fp_count <= max_fp)
            .map(|p| p.tpr)
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fp_count,tpr\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.threshold, p.fp_count, p.tpr));
        }
        s
    }
}

/// Scored outcome of one detection after matching in its image.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    score: f64,
    overlap: Option<f64>,
}

/// Sorts by score descending with a geometric tie-break so the result does
/// not depend on input order.
fn canonical_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&dets[a], &dets[b]);
        db.score
            .total_cmp(&da.score)
            .then(da.bbox.x.total_cmp(&db.bbox.x))
            .then(da.bbox.y.total_cmp(&db.bbox.y))
            .then(da.bbox.w.total_cmp(&db.bbox.w))
            .then(da.bbox.h.total_cmp(&db.bbox.h))
    });
    order
}

fn image_outcomes(img: &ImageEval, shape: DetectionShape, matcher: &dyn Matcher) -> Vec<Outcome> {
    let order = canonical_order(&img.detections);
    let regions: Vec<Region> = order.iter().map(|&i| shape.region(&img.detections[i])).collect();
    let m = matcher.match_regions(&regions, &img.ground_truth, img.canvas);
    let overlaps = m.overlap_by_detection(regions.len());
    order
        .iter()
        .zip(overlaps)
        .map(|(&i, overlap)| Outcome {
            score: img.detections[i].score,
            overlap,
        })
        .collect()
}

/// Sweeps every distinct detection score as a threshold. Greedy matching in
/// score order is prefix-stable, so one matching pass per image yields the
/// match set at every threshold.
fn sweep(mut outcomes: Vec<Outcome>, total_gt: usize, protocol: Protocol) -> EvalCurve {
    outcomes.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut fp, mut tp, mut overlap_sum) = (0usize, 0usize, 0.0f64);
    let mut i = 0;
    while i < outcomes.len() {
        let threshold = outcomes[i].score;
        while i < outcomes.len() && outcomes[i].score == threshold {
            match outcomes[i].overlap {
                Some(o) => {
                    tp += 1;
                    overlap_sum += o;
                }
                None => fp += 1,
            }
            i += 1;
        }
        let hits = match protocol {
            Protocol::Discrete => tp as f64,
            Protocol::Continuous => overlap_sum,
        };
        points.push(CurvePoint {
            threshold,
            fp_count: fp,
            tpr: hits / total_gt as f64,
        });
    }
    EvalCurve { points }
}

/// ROC curve over all images (counts summed across folds).
pub fn roc_curve(
    images: &[ImageEval],
    protocol: Protocol,
    shape: DetectionShape,
    matcher: &dyn Matcher,
) -> Result<EvalCurve> {
    let total_gt: usize = images.iter().map(|i| i.ground_truth.len()).sum();
    if total_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let outcomes = images
        .iter()
        .flat_map(|img| image_outcomes(img, shape, matcher))
        .collect();
    Ok(sweep(outcomes, total_gt, protocol))
}

/// One curve per fold, in ascending fold order.
pub fn roc_curves_by_fold(
    images: &[ImageEval],
    protocol: Protocol,
    shape: DetectionShape,
    matcher: &dyn Matcher,
) -> Result<Vec<(usize, EvalCurve)>> {
    let mut folds: Vec<usize> = images.iter().map(|i| i.fold).collect();
    folds.sort_unstable();
    folds.dedup();
    folds
        .into_iter()
        .map(|f| {
            let subset: Vec<ImageEval> = images.iter().filter(|i| i.fold == f).cloned().collect();
            Ok((f, roc_curve(&subset, protocol, shape, matcher)?))
        })
        .collect()
}

/// Box detections and box ground truth for one image.
#[derive(Debug, Clone)]
pub struct BoxImage {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<BoundingBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Greedy one-to-one matching on exact box IoU (> 0.5).
fn match_boxes(dets: &[Detection], order: &[usize], gts: &[BoundingBox]) -> Vec<bool> {
    let mut claimed = vec![false; gts.len()];
    order
        .iter()
        .map(|&i| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                let o = iou(&dets[i].bbox, gt);
                if !claimed[g] && o > MATCH_OVERLAP && best.map_or(true, |(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                claimed[g] = true;
            }
            best.is_some()
        })
        .collect()
}

/// Precision/recall after each detection in global score order.
pub fn precision_recall(images: &[BoxImage]) -> Result<Vec<PrPoint>> {
    let total_gt: usize = images.iter().map(|i| i.ground_truth.len()).sum();
    if total_gt == 0 {
        return Err(Error::NoGroundTruth);
    }
    let mut flagged: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let order = canonical_order(&img.detections);
        let hits = match_boxes(&img.detections, &order, &img.ground_truth);
        flagged.extend(order.iter().zip(hits).map(|(&i, hit)| (img.detections[i].score, hit)));
    }
    flagged.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    Ok(flagged
        .iter()
        .enumerate()
        .map(|(k, &(threshold, hit))| {
            tp += hit as usize;
            PrPoint {
                threshold,
                precision: tp as f64 / (k + 1) as f64,
                recall: tp as f64 / total_gt as f64,
            }
        })
        .collect())
}

/// Average precision with all-points interpolation: the area under the
/// precision/recall staircase where precision at each recall is the best
/// precision achieved at that recall or beyond.
pub fn pascal_ap(images: &[BoxImage]) -> Result<f64> {
    let pr = precision_recall(images)?;
    let mut envelope: Vec<f64> = pr.iter().map(|p| p.precision).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, &prec) in pr.iter().zip(&envelope) {
        ap += (p.recall - prev_recall) * prec;
        prev_recall = p.recall;
    }
    Ok(ap.clamp(0.0, 1.0))
}
