//! Training-data construction.
//!
//! Two sets are produced. The channel-induction set pairs each original
//! image with a copy whose face regions are replaced by uniform RGB noise.
//! The classifier set holds face crops (plus darkened, blurred, and occluded
//! variants) against background crops at fixed IoU targets, double-sized
//! face crops, and faces padded out with non-face surroundings.

use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, PixelRect};

/// IoU targets for background crops.
pub const DEFAULT_IOU_TARGETS: [f64; 3] = [0.0, 0.1, 0.2];
pub const IOU_TOLERANCE: f64 = 0.02;
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;
pub const DEFAULT_PAD_FRACTION: f64 = 0.5;

/// Replaces every pixel inside any box with independent uniform noise in
/// `[0, 255]` per channel. Pixels outside all boxes are untouched.
pub fn mask_faces(image: &RgbImage, boxes: &[BoundingBox], seed: u64) -> RgbImage {
    let (w, h) = image.dimensions();
    let mut out = image.clone();
    let mut mask = vec![false; (w * h) as usize];
    for span in boxes.iter().filter_map(|b| b.pixel_span(w as usize, h as usize)) {
        for y in span.y0..span.y1 {
            mask[y * w as usize + span.x0..y * w as usize + span.x1].fill(true);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, px) in out.pixels_mut().enumerate() {
        if mask[i] {
            *px = Rgb(rng.gen());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub darken_gain: f64,
    pub blur_radius: u32,
    pub occlusion_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            darken_gain: 0.4,
            blur_radius: 3,
            occlusion_fraction: 0.25,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.darken_gain > 0.0 && self.darken_gain <= 1.0) {
            return Err(Error::invalid(format!("darken_gain {} must be in (0, 1]", self.darken_gain)));
        }
        if !(0.0..1.0).contains(&self.occlusion_fraction) {
            return Err(Error::invalid(format!(
                "occlusion_fraction {} must be in [0, 1)",
                self.occlusion_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    Original,
    Darkened,
    Blurred,
    Occluded,
}

impl AugmentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AugmentKind::Original => "original",
            AugmentKind::Darkened => "darkened",
            AugmentKind::Blurred => "blurred",
            AugmentKind::Occluded => "occluded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub kind: AugmentKind,
    pub image: RgbImage,
    /// Noise rectangle, for the occluded variant.
    pub occluder: Option<PixelRect>,
}

/// Original, darkened, blurred, and occluded copies of a face crop.
pub fn augment_face(crop: &RgbImage, spec: &AugmentSpec) -> Result<Vec<Augmented>> {
    spec.validate()?;
    let darkened = darken(crop, spec.darken_gain);
    let blurred = box_blur(crop, spec.blur_radius);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (occluded, rect) = occlude(crop, spec.occlusion_fraction, &mut rng);
    Ok(vec![
        Augmented { kind: AugmentKind::Original, image: crop.clone(), occluder: None },
        Augmented { kind: AugmentKind::Darkened, image: darkened, occluder: None },
        Augmented { kind: AugmentKind::Blurred, image: blurred, occluder: None },
        Augmented { kind: AugmentKind::Occluded, image: occluded, occluder: rect },
    ])
}

fn darken(img: &RgbImage, gain: f64) -> RgbImage {
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = (*v as f64 * gain).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Mean over the `(2r+1)^2` neighbourhood with edge clamping.
pub fn box_blur(img: &RgbImage, radius: u32) -> RgbImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = radius as i64;
    let n = (2 * r + 1) as u32;
    let idx = |x: i64, y: i64| (y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize * 3;
    let src = img.as_raw();
    // horizontal sums, kept as integers so the result is exact
    let mut horiz = vec![0u32; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                horiz[idx(x, y) + c] = (-r..=r).map(|k| src[idx(x + k, y) + c] as u32).sum();
            }
        }
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    let dst: &mut [u8] = &mut out;
    let denom = n * n;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let s: u32 = (-r..=r).map(|k| horiz[idx(x, y + k) + c]).sum();
                dst[idx(x, y) + c] = ((s + denom / 2) / denom) as u8;
            }
        }
    }
    out
}

fn occlude(img: &RgbImage, fraction: f64, rng: &mut ChaCha8Rng) -> (RgbImage, Option<PixelRect>) {
    let (w, h) = img.dimensions();
    let area = fraction * (w as f64) * (h as f64);
    if area < 1.0 {
        return (img.clone(), None);
    }
    let aspect: f64 = rng.gen_range(0.5..2.0);
    let rw = ((area * aspect).sqrt().round() as u32).clamp(1, w);
    let rh = ((area / rw as f64).round() as u32).clamp(1, h);
    let x = rng.gen_range(0..=w - rw);
    let y = rng.gen_range(0..=h - rh);
    let mut out = img.clone();
    for yy in y..y + rh {
        for xx in x..x + rw {
            out.put_pixel(xx, yy, Rgb(rng.gen()));
        }
    }
    (out, Some(PixelRect::new(x, y, rw, rh)))
}

/// A background crop placed at a target IoU to the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativeSample {
    pub target: f64,
    pub rect: PixelRect,
    /// Largest IoU against any ground-truth box.
    pub iou: f64,
}

fn max_iou(b: &BoundingBox, gts: &[BoundingBox]) -> f64 {
    gts.iter().map(|g| iou(b, g)).fold(0.0, f64::max)
}

/// Finds a ground-truth-sized crop whose largest IoU with the ground truth is
/// within [`IOU_TOLERANCE`] of `target` (exactly zero when `target` is zero).
pub fn sample_negative(
    width: u32,
    height: u32,
    gts: &[BoundingBox],
    reference: usize,
    target: f64,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<NegativeSample> {
    let gt = gts
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("no ground-truth box {reference}")))?;
    let cw = (gt.w.round() as u32).max(1);
    let ch = (gt.h.round() as u32).max(1);
    let infeasible = Error::InfeasibleTarget {
        target,
        attempts: max_attempts,
    };
    if cw > width || ch > height {
        return Err(infeasible);
    }
    let (max_x, max_y) = ((width - cw) as i64, (height - ch) as i64);
    for _ in 0..max_attempts {
        let (x, y) = if target == 0.0 {
            (rng.gen_range(0..=max_x), rng.gen_range(0..=max_y))
        } else {
            // overlapping placements lie within one box size of the reference
            let lo_x = (gt.x - cw as f64).floor().max(0.0) as i64;
            let hi_x = ((gt.right()).ceil() as i64).min(max_x);
            let lo_y = (gt.y - ch as f64).floor().max(0.0) as i64;
            let hi_y = ((gt.bottom()).ceil() as i64).min(max_y);
            if lo_x > hi_x || lo_y > hi_y {
                return Err(infeasible);
            }
            (rng.gen_range(lo_x..=hi_x), rng.gen_range(lo_y..=hi_y))
        };
        let rect = PixelRect::new(x as u32, y as u32, cw, ch);
        let overlap = max_iou(&rect.to_box(), gts);
        let ok = if target == 0.0 {
            overlap == 0.0
        } else {
            (overlap - target).abs() <= IOU_TOLERANCE
        };
        if ok {
            return Ok(NegativeSample { target, rect, iou: overlap });
        }
    }
    Err(infeasible)
}

/// One background crop per IoU target, cycling through the ground-truth boxes
/// as size references. Infeasible targets are reported individually.
pub fn sample_negatives(
    width: u32,
    height: u32,
    gts: &[BoundingBox],
    targets: &[f64],
    seed: u64,
    max_attempts: usize,
) -> Vec<Result<NegativeSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    targets
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            if gts.is_empty() {
                return Err(Error::invalid("sampling negatives needs ground truth"));
            }
            sample_negative(width, height, gts, k % gts.len(), t, &mut rng, max_attempts)
        })
        .collect()
}

/// The box scaled by two about its center, clipped to the image.
pub fn double_size_rect(width: u32, height: u32, gt: &BoundingBox) -> Option<PixelRect> {
    let (cx, cy) = gt.center();
    let doubled = BoundingBox {
        x: cx - gt.w,
        y: cy - gt.h,
        w: 2.0 * gt.w,
        h: 2.0 * gt.h,
    };
    PixelRect::covering(&doubled, width, height)
}

pub fn double_size_crop(image: &RgbImage, gt: &BoundingBox) -> Option<(PixelRect, RgbImage)> {
    let rect = double_size_rect(image.width(), image.height(), gt)?;
    Some((rect, crop(image, rect)))
}

pub fn crop(image: &RgbImage, rect: PixelRect) -> RgbImage {
    imageops::crop_imm(image, rect.x, rect.y, rect.w, rect.h).to_image()
}

/// Places `face` in the middle of a background patch with a border of
/// `pad_fraction * side` on every side. The patch position in `background`
/// is drawn from `seed`.
pub fn pad_face(face: &RgbImage, background: &RgbImage, pad_fraction: f64, seed: u64) -> Result<RgbImage> {
    if !(pad_fraction >= 0.0 && pad_fraction.is_finite()) {
        return Err(Error::invalid(format!("pad fraction {pad_fraction} must be >= 0")));
    }
    if pad_fraction == 0.0 {
        return Ok(face.clone());
    }
    let (fw, fh) = face.dimensions();
    let bx = (pad_fraction * fw as f64).round() as u32;
    let by = (pad_fraction * fh as f64).round() as u32;
    let (ow, oh) = (fw + 2 * bx, fh + 2 * by);
    let (bw, bh) = background.dimensions();
    if bw < ow || bh < oh {
        return Err(Error::BackgroundTooSmall {
            bg_w: bw,
            bg_h: bh,
            out_w: ow,
            out_h: oh,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.gen_range(0..=bw - ow);
    let y = rng.gen_range(0..=bh - oh);
    let mut out = crop(background, PixelRect::new(x, y, ow, oh));
    imageops::replace(&mut out, face, bx as i64, by as i64);
    Ok(out)
}

/// Independent per-item seed: word 0 of ChaCha8 stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    pub fn dir(&self) -> &'static str {
        match self {
            Label::Pos => "pos",
            Label::Neg => "neg",
        }
    }
}

/// Which fine-tuning stage a sample feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Face vs masked face, used to induce the object-specific channel. The
    /// unmasked source image is the positive and is not copied.
    ChannelInduction,
    /// Face vs non-face proposal classifier.
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub augment: AugmentSpec,
    pub iou_targets: Vec<f64>,
    pub pad_fraction: f64,
    pub max_attempts: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            augment: AugmentSpec::default(),
            iou_targets: DEFAULT_IOU_TARGETS.to_vec(),
            pad_fraction: DEFAULT_PAD_FRACTION,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        self.augment.validate()?;
        if self.iou_targets.iter().any(|t| !(0.0..1.0).contains(t)) {
            return Err(Error::invalid("IoU targets must lie in [0, 1)"));
        }
        if !(self.pad_fraction >= 0.0 && self.pad_fraction.is_finite()) {
            return Err(Error::invalid("pad_fraction must be >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be positive"));
        }
        Ok(())
    }
}

/// One generated training crop.
#[derive(Debug, Clone)]
pub struct Sample {
    pub label: Label,
    pub stage: Stage,
    /// Provenance, e.g. `mask`, `darkened`, `iou_0.1`, `double_size`, `padded`.
    pub op: String,
    pub image: RgbImage,
}

/// Every training crop derived from one annotated image, in a fixed order:
/// the masked image, then per box the four face variants, the IoU negatives,
/// the double-size crop, and the padded crop. Per-box failures (infeasible
/// IoU target, background too small) are returned alongside and do not stop
/// the rest. An image without boxes yields nothing.
pub fn prepare_image(
    image: &RgbImage,
    boxes: &[BoundingBox],
    cfg: &PrepConfig,
    seed: u64,
) -> (Vec<Sample>, Vec<Error>) {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    if boxes.is_empty() {
        return (samples, errors);
    }
    let (w, h) = image.dimensions();
    let sample = |label, stage, op: &str, image| Sample { label, stage, op: op.to_owned(), image };
    samples.push(sample(
        Label::Neg,
        Stage::ChannelInduction,
        "mask",
        mask_faces(image, boxes, derive_seed(seed, 0)),
    ));
    let mut neg_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    for (i, b) in boxes.iter().enumerate() {
        let stream = 16 * (i as u64 + 1);
        let Some(rect) = PixelRect::covering(b, w, h) else {
            errors.push(Error::invalid(format!("box {i} lies outside the image")));
            continue;
        };
        let face = crop(image, rect);
        let spec = AugmentSpec { seed: derive_seed(seed, stream), ..cfg.augment };
        match augment_face(&face, &spec) {
            Ok(variants) => samples.extend(
                variants
                    .into_iter()
                    .map(|a| sample(Label::Pos, Stage::Classifier, a.kind.as_str(), a.image)),
            ),
            Err(e) => errors.push(e),
        }
        for &t in &cfg.iou_targets {
            match sample_negative(w, h, boxes, i, t, &mut neg_rng, cfg.max_attempts) {
                Ok(n) => samples.push(sample(Label::Neg, Stage::Classifier, &format!("iou_{t}"), crop(image, n.rect))),
                Err(e) => errors.push(e),
            }
        }
        if let Some((_, c)) = double_size_crop(image, b) {
            samples.push(sample(Label::Neg, Stage::Classifier, "double_size", c));
        }
        match pad_face(&face, image, cfg.pad_fraction, derive_seed(seed, stream + 1)) {
            Ok(p) => samples.push(sample(Label::Neg, Stage::Classifier, "padded", p)),
            Err(e) => errors.push(e),
        }
    }
    (samples, errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x + y) % 256) as u8]))
    }

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn masking_touches_only_boxes() {
        let img = gradient(120, 90);
        assert_eq!(mask_faces(&img, &[], 1), img);
        let boxes = [bx(10.0, 10.0, 30.0, 20.0), bx(60.0, 40.0, 25.0, 40.0)];
        let a = mask_faces(&img, &boxes, 7);
        assert_eq!(a, mask_faces(&img, &boxes, 7));
        assert_ne!(a, mask_faces(&img, &boxes, 8));
        for (x, y, p) in a.enumerate_pixels() {
            let inside = boxes.iter().any(|b| b.contains_point(x as f64 + 0.5, y as f64 + 0.5));
            if !inside {
                assert_eq!(p, img.get_pixel(x, y));
            }
        }
    }

    #[test]
    fn masked_region_mean_is_mid_gray() {
        let img = RgbImage::new(120, 120);
        let b = bx(10.0, 10.0, 100.0, 100.0);
        let m = mask_faces(&img, &[b], 3);
        for c in 0..3 {
            let mut sum = 0.0;
            for y in 10..110 {
                for x in 10..110 {
                    sum += m.get_pixel(x, y)[c] as f64;
                }
            }
            // uniform 0..255: sd 73.9, so the mean of 10^4 samples has sd 0.74
            let mean = sum / 10_000.0;
            assert!((mean - 127.5).abs() < 5.0, "channel {c} mean {mean}");
        }
    }

    #[test]
    fn augment_identity_settings() {
        let face = gradient(40, 50);
        let spec = AugmentSpec { darken_gain: 1.0, blur_radius: 0, occlusion_fraction: 0.0, seed: 1 };
        let out = augment_face(&face, &spec).unwrap();
        assert_eq!(out.len(), 4);
        for a in &out {
            assert_eq!(a.image, face, "{:?}", a.kind);
        }
        assert!(out[3].occluder.is_none());
    }

    #[test]
    fn augment_defaults() {
        let face = gradient(100, 100);
        let out = augment_face(&face, &AugmentSpec::default()).unwrap();
        let kinds: Vec<AugmentKind> = out.iter().map(|a| a.kind).collect();
        assert_eq!(
            kinds,
            vec![AugmentKind::Original, AugmentKind::Darkened, AugmentKind::Blurred, AugmentKind::Occluded]
        );
        assert!(out.iter().all(|a| a.image.dimensions() == (100, 100)));
        assert_eq!(out[1].image.get_pixel(50, 20).0, [20, 8, 28]);
        let r = out[3].occluder.unwrap();
        let area = (r.w * r.h) as f64;
        // rounding w and h moves the area by at most about w/2 + h/2
        assert!((area - 2500.0).abs() <= (r.w + r.h) as f64 / 2.0 + 1.0, "area {area}");
        assert!(augment_face(&face, &AugmentSpec { darken_gain: 0.0, ..AugmentSpec::default() }).is_err());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = RgbImage::from_pixel(20, 20, Rgb([9, 99, 199]));
        assert_eq!(box_blur(&img, 3), img);
        // a single bright pixel spreads evenly over a 3x3 block
        let mut dot = RgbImage::new(9, 9);
        dot.put_pixel(4, 4, Rgb([225, 225, 225]));
        let b = box_blur(&dot, 1);
        assert_eq!(b.get_pixel(3, 3).0, [25, 25, 25]);
        assert_eq!(b.get_pixel(2, 2).0, [0, 0, 0]);
    }

    #[test]
    fn negatives_hit_targets() {
        let gts = [bx(80.0, 60.0, 50.0, 50.0)];
        let samples = sample_negatives(300, 240, &gts, &DEFAULT_IOU_TARGETS, 9, DEFAULT_MAX_ATTEMPTS);
        for (s, t) in samples.iter().zip(DEFAULT_IOU_TARGETS) {
            let s = s.as_ref().unwrap();
            let measured = iou(&s.rect.to_box(), &gts[0]);
            if t == 0.0 {
                assert_eq!(measured, 0.0);
            } else {
                assert!((measured - t).abs() <= IOU_TOLERANCE);
            }
            assert_eq!((s.rect.w, s.rect.h), (50, 50));
        }
    }

    #[test]
    fn infeasible_negative_is_reported() {
        // the box fills the image, so no disjoint crop exists
        let gts = [bx(0.0, 0.0, 100.0, 100.0)];
        let out = sample_negatives(100, 100, &gts, &[0.0], 1, 500);
        assert!(matches!(out[0], Err(Error::InfeasibleTarget { attempts: 500, .. })));
    }

    #[test]
    fn double_size_examples() {
        let r = double_size_rect(100, 100, &bx(40.0, 40.0, 20.0, 20.0)).unwrap();
        assert_eq!(r, PixelRect::new(30, 30, 40, 40));
        let edge = double_size_rect(100, 100, &bx(0.0, 0.0, 20.0, 20.0)).unwrap();
        assert_eq!(edge, PixelRect::new(0, 0, 30, 30));
    }

    #[test]
    fn padding_examples() {
        let face = gradient(100, 100);
        let bg = RgbImage::from_pixel(300, 300, Rgb([1, 2, 3]));
        assert_eq!(pad_face(&face, &bg, 0.0, 1).unwrap(), face);
        let out = pad_face(&face, &bg, 0.5, 1).unwrap();
        assert_eq!(out.dimensions(), (200, 200));
        assert_eq!(crop(&out, PixelRect::new(50, 50, 100, 100)), face);
        assert_eq!(out.get_pixel(10, 10).0, [1, 2, 3]);
        let small = RgbImage::new(150, 150);
        assert!(matches!(pad_face(&face, &small, 0.5, 1), Err(Error::BackgroundTooSmall { .. })));
    }

    #[test]
    fn one_box_yields_ten_samples() {
        let img = gradient(320, 240);
        let (samples, errors) = prepare_image(&img, &[bx(100.0, 80.0, 60.0, 60.0)], &PrepConfig::default(), 5);
        assert!(errors.is_empty(), "{errors:?}");
        let ops: Vec<&str> = samples.iter().map(|s| s.op.as_str()).collect();
        assert_eq!(
            ops,
            ["mask", "original", "darkened", "blurred", "occluded", "iou_0", "iou_0.1", "iou_0.2", "double_size", "padded"]
        );
        assert_eq!(samples.iter().filter(|s| s.label == Label::Pos).count(), 4);
        let again = prepare_image(&img, &[bx(100.0, 80.0, 60.0, 60.0)], &PrepConfig::default(), 5).0;
        assert!(samples.iter().zip(&again).all(|(a, b)| a.image == b.image));
        assert!(prepare_image(&img, &[], &PrepConfig::default(), 5).0.is_empty());
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
    }
}
