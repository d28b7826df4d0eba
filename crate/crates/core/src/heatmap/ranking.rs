use image::imageops::{self, FilterType};
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{coverage_mask, Resampler};
use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, PixelSpan};

/// An image together with its ground-truth object boxes.
#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    pub image: RgbImage,
    pub boxes: Vec<BoundingBox>,
}

/// Mean activation of one channel inside and outside the annotated regions,
/// averaged over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub channel: usize,
    pub inside: f64,
    pub outside: f64,
}

struct Prepared {
    spans: Vec<PixelSpan>,
    /// Uncovered `[x0, x1)` runs per row.
    outside_runs: Vec<Vec<(usize, usize)>>,
    outside_count: usize,
    features: crate::backend::FeatureMaps,
}

/// Scores every channel of the backend's feature layer over `dataset` and
/// returns them sorted by inside score, highest first.
///
/// Each channel is bicubic-upsampled to the network input size. Per image the
/// inside score is the mean face-score over that image's boxes and the outside
/// score is the mean over all remaining pixels; both are then averaged across
/// images. Images without usable boxes are skipped.
pub fn rank_channels(dataset: &[AnnotatedImage], backend: &dyn Backend) -> Result<Vec<ChannelScore>> {
    let side = backend.descriptor().input_side;
    let n = side as usize;

    let mut prepared = Vec::new();
    for (idx, item) in dataset.iter().enumerate() {
        match prepare(item, side, backend)? {
            Some(p) => prepared.push(p),
            None => log::warn!("rank_channels: skipping image {idx} without usable boxes"),
        }
    }
    let first = prepared.first().ok_or(Error::EmptyDataset)?;
    let channels = first.features.channels();
    let (fw, fh) = (first.features.width(), first.features.height());
    if prepared
        .iter()
        .any(|p| p.features.shape() != (channels, fh, fw))
    {
        return Err(Error::Backend("feature shape changed between images".into()));
    }
    let resampler = Resampler::new(fw, fh, n, n)?;

    let mut scores: Vec<ChannelScore> = (0..channels)
        .into_par_iter()
        .map_init(
            || (Default::default(), Vec::new()),
            |(scratch, span_sums): &mut ((Vec<f64>, Vec<f64>), Vec<f64>), c| {
            let (mut inside_sum, mut outside_sum) = (0.0, 0.0);
            for p in &prepared {
                span_sums.clear();
                span_sums.resize(p.spans.len(), 0.0);
                let mut outside = 0.0;
                resampler.for_each_row(p.features.channel_values(c), f64::INFINITY, scratch, |y, row| {
                    for (s, acc) in p.spans.iter().zip(span_sums.iter_mut()) {
                        if (s.y0..s.y1).contains(&y) {
                            *acc += lane_sum(&row[s.x0..s.x1]);
                        }
                    }
                    for &(x0, x1) in &p.outside_runs[y] {
                        outside += lane_sum(&row[x0..x1]);
                    }
                });
                let inside = p
                    .spans
                    .iter()
                    .zip(span_sums.iter())
                    .map(|(s, sum)| sum / s.count() as f64)
                    .sum::<f64>()
                    / p.spans.len() as f64;
                inside_sum += inside;
                outside_sum += outside / p.outside_count as f64;
            }
            let k = prepared.len() as f64;
            ChannelScore {
                channel: c,
                inside: inside_sum / k,
                outside: outside_sum / k,
            }
        })
        .collect();
    scores.sort_by(|a, b| b.inside.total_cmp(&a.inside).then(a.channel.cmp(&b.channel)));
    Ok(scores)
}

fn prepare(item: &AnnotatedImage, side: u32, backend: &dyn Backend) -> Result<Option<Prepared>> {
    if item.boxes.is_empty() {
        return Ok(None);
    }
    let (w, h) = item.image.dimensions();
    let (sx, sy) = (side as f64 / w as f64, side as f64 / h as f64);
    let boxes: Vec<BoundingBox> = item
        .boxes
        .iter()
        .map(|b| BoundingBox {
            x: b.x * sx,
            y: b.y * sy,
            w: b.w * sx,
            h: b.h * sy,
        })
        .collect();
    let n = side as usize;
    let spans: Vec<PixelSpan> = boxes.iter().filter_map(|b| b.pixel_span(n, n)).collect();
    if spans.is_empty() {
        return Ok(None);
    }
    let covered = coverage_mask(n, n, &boxes);
    if covered.iter().all(|&c| c) {
        return Ok(None);
    }
    let input = if (w, h) == (side, side) {
        item.image.clone()
    } else {
        imageops::resize(&item.image, side, side, FilterType::CatmullRom)
    };
    let features = backend.infer_features(&input)?;
    let outside_runs: Vec<Vec<(usize, usize)>> = covered.chunks_exact(n).map(uncovered_runs).collect();
    let outside_count = covered.iter().filter(|&&c| !c).count();
    Ok(Some(Prepared {
        spans,
        outside_runs,
        outside_count,
        features,
    }))
}

/// Four independent accumulators so the adds pipeline.
fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = v.chunks_exact(4);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..4 {
            acc[k] += c[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn uncovered_runs(row: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (x, &c) in row.iter().chain(std::iter::once(&true)).enumerate() {
        match (c, start) {
            (false, None) => start = Some(x),
            (true, Some(x0)) => {
                runs.push((x0, x));
                start = None;
            }
            _ => {}
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendDescriptor, FeatureMaps};
    use crate::heatmap::{face_score, outside_score, resize_bicubic};

    #[test]
    fn runs_are_the_uncovered_gaps() {
        let row = |bits: &str| bits.bytes().map(|b| b == b'1').collect::<Vec<_>>();
        assert_eq!(uncovered_runs(&row("0011010")), vec![(0, 2), (4, 5), (6, 7)]);
        assert_eq!(uncovered_runs(&row("111")), vec![]);
        assert_eq!(uncovered_runs(&row("000")), vec![(0, 3)]);
    }

    /// Single-channel backend whose map is a fixed ramp.
    struct Ramp(BackendDescriptor);

    impl Backend for Ramp {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.0
        }
        fn infer_features(&self, _: &RgbImage) -> Result<FeatureMaps> {
            FeatureMaps::new(1, 4, 4, (0..16).map(|v| v as f64).collect())
        }
        fn infer_class_scores(&self, batch: &[RgbImage]) -> Result<Vec<f64>> {
            Ok(vec![0.5; batch.len()])
        }
    }

    fn ramp() -> Ramp {
        Ramp(BackendDescriptor {
            input_side: 32,
            feature_layer: "ramp".into(),
            class_count: 2,
            concurrency_safe: true,
        })
    }

    #[test]
    fn single_image_single_channel_equals_direct_pair() {
        let b = ramp();
        let boxes = vec![BoundingBox::new(4.0, 4.0, 10.0, 12.0).unwrap()];
        let item = AnnotatedImage {
            image: RgbImage::new(32, 32),
            boxes: boxes.clone(),
        };
        let scores = rank_channels(std::slice::from_ref(&item), &b).unwrap();
        assert_eq!(scores.len(), 1);
        let up = resize_bicubic(&b.infer_features(&item.image).unwrap().channel(0).unwrap(), 32, 32).unwrap();
        assert!((scores[0].inside - face_score(&up, &boxes[0]).unwrap()).abs() < 1e-9);
        assert!((scores[0].outside - outside_score(&up, &boxes).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn boxless_images_are_skipped() {
        let b = ramp();
        let empty = AnnotatedImage {
            image: RgbImage::new(32, 32),
            boxes: vec![],
        };
        assert!(matches!(rank_channels(std::slice::from_ref(&empty), &b), Err(Error::EmptyDataset)));
        assert!(matches!(rank_channels(&[], &b), Err(Error::EmptyDataset)));
    }

    #[test]
    fn boxes_scale_with_image_resize() {
        let b = ramp();
        let small = AnnotatedImage {
            image: RgbImage::new(32, 32),
            boxes: vec![BoundingBox::new(0.0, 0.0, 16.0, 16.0).unwrap()],
        };
        let big = AnnotatedImage {
            image: RgbImage::new(64, 64),
            boxes: vec![BoundingBox::new(0.0, 0.0, 32.0, 32.0).unwrap()],
        };
        let a = rank_channels(&[small], &b).unwrap();
        let c = rank_channels(&[big], &b).unwrap();
        assert!((a[0].inside - c[0].inside).abs() < 1e-9);
    }
}
