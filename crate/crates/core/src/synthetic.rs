//! Seeded synthetic scenes: bright discs on a noisy background. These pair
//! with [`SyntheticBackend`](crate::backend::SyntheticBackend) to exercise the
//! pipeline without a trained model.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

const BACKGROUND: [f64; 3] = [70.0, 80.0, 90.0];
const DISC: [f64; 3] = [235.0, 205.0, 175.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    /// Tight square around the disc.
    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox {
            x: self.cx - self.radius,
            y: self.cy - self.radius,
            w: 2.0 * self.radius,
            h: 2.0 * self.radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub discs: Vec<Disc>,
    pub seed: u64,
    /// Half-width of the uniform per-pixel background noise.
    pub noise_amplitude: f64,
}

impl SceneSpec {
    pub fn new(width: u32, height: u32, discs: Vec<Disc>, seed: u64) -> Self {
        SceneSpec {
            width,
            height,
            discs,
            seed,
            noise_amplitude: 25.0,
        }
    }

    pub fn ground_truth(&self) -> Vec<BoundingBox> {
        self.discs.iter().map(Disc::bounding_box).collect()
    }
}

pub fn render_scene(spec: &SceneSpec) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut img = RgbImage::new(spec.width, spec.height);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let coverage = spec
            .discs
            .iter()
            .map(|d| {
                let r = ((fx - d.cx).powi(2) + (fy - d.cy).powi(2)).sqrt();
                (d.radius - r + 0.5).clamp(0.0, 1.0)
            })
            .fold(0.0, f64::max);
        let noise = if spec.noise_amplitude > 0.0 {
            rng.gen_range(-spec.noise_amplitude..=spec.noise_amplitude)
        } else {
            0.0
        };
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            let bg = BACKGROUND[c] + noise;
            rgb[c] = (bg * (1.0 - coverage) + DISC[c] * coverage).round().clamp(0.0, 255.0) as u8;
        }
        *px = Rgb(rgb);
    }
    img
}

/// Scene with `count` discs whose diameters fall in `diameter` and whose
/// tight boxes are separated by at least `gap` pixels. Discs stay inside the
/// frame. Falls back to fewer discs if placement keeps failing.
pub fn random_scene(
    seed: u64,
    width: u32,
    height: u32,
    count: usize,
    diameter: (f64, f64),
    gap: f64,
) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut discs: Vec<Disc> = Vec::with_capacity(count);
    let mut attempts = 0;
    while discs.len() < count && attempts < 10_000 {
        attempts += 1;
        let d = if diameter.1 > diameter.0 {
            rng.gen_range(diameter.0..diameter.1)
        } else {
            diameter.0
        };
        let r = d / 2.0;
        if 2.0 * r > width.min(height) as f64 {
            break;
        }
        let cx = rng.gen_range(r..=width as f64 - r);
        let cy = rng.gen_range(r..=height as f64 - r);
        let candidate = Disc { cx, cy, radius: r };
        let clear = discs.iter().all(|o| {
            let dx = (o.cx - cx).abs() - o.radius - r;
            let dy = (o.cy - cy).abs() - o.radius - r;
            dx >= gap || dy >= gap
        });
        if clear {
            discs.push(candidate);
        }
    }
    SceneSpec::new(width, height, discs, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 1)
}
