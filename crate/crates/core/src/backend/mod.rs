//! Inference backends: something that maps a square RGB image to a layer of
//! convolutional feature maps and to a face / non-face probability.

#[cfg(feature = "onnx")]
mod onnx;
mod synthetic;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelRect;
use crate::heatmap::{Heatmap, Scale};

#[cfg(feature = "onnx")]
pub use onnx::{ClassOutput, OnnxBackend, OnnxConfig};
pub use synthetic::{SyntheticBackend, SyntheticConfig};

/// Side of the square network input the original detector was built around.
pub const DEFAULT_INPUT_SIDE: u32 = 227;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub input_side: u32,
    pub feature_layer: String,
    pub class_count: usize,
    /// Whether `infer_*` may be called from several threads at once.
    pub concurrency_safe: bool,
}

/// `C x H x W` rectified activations of one layer, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureMaps {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("feature map dimensions must be positive"));
        }
        if values.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "feature maps {channels}x{height}x{width} need {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::invalid("feature activations must be non-negative"));
        }
        Ok(FeatureMaps {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel_values(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    /// Channel `c` as a raw-scale heatmap on the feature grid.
    pub fn channel(&self, c: usize) -> Result<Heatmap> {
        if c >= self.channels {
            return Err(Error::invalid(format!(
                "channel {c} out of range for {} channels",
                self.channels
            )));
        }
        Ok(Heatmap::from_parts(
            self.width,
            self.height,
            self.channel_values(c).to_vec(),
            Scale::Raw,
        ))
    }
}

pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Feature maps of the configured layer for one `input_side`-square image.
    fn infer_features(&self, image: &RgbImage) -> Result<FeatureMaps>;

    /// Face probability for each image, in order. An empty batch is not an error.
    fn infer_class_scores(&self, batch: &[RgbImage]) -> Result<Vec<f64>>;
}

pub(crate) fn check_input(image: &RgbImage, side: u32, index: usize) -> Result<()> {
    let (w, h) = image.dimensions();
    if w != side || h != side {
        return Err(Error::WrongInputSize {
            index,
            expected: side,
            actual_w: w,
            actual_h: h,
        });
    }
    Ok(())
}

/// Crops `rect` out of `image` and bicubic-resizes it to the network input.
pub fn crop_to_input(image: &RgbImage, rect: PixelRect, side: u32) -> RgbImage {
    let view = imageops::crop_imm(image, rect.x, rect.y, rect.w, rect.h);
    if rect.w == side && rect.h == side {
        return view.to_image();
    }
    imageops::resize(&*view, side, side, FilterType::CatmullRom)
}
