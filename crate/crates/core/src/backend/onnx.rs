//! Backend over a serialized ONNX graph, executed with tract.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{check_input, Backend, BackendDescriptor, FeatureMaps, DEFAULT_INPUT_SIDE};
use crate::error::{Error, Result};

/// What the class tensor holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassOutput {
    Probabilities,
    /// Softmax is applied on load.
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnnxConfig {
    pub path: PathBuf,
    pub input_tensor: String,
    pub feature_tensor: String,
    pub class_tensor: String,
    #[serde(default = "default_side")]
    pub input_side: u32,
    #[serde(default = "default_face_index")]
    pub face_class_index: usize,
    #[serde(default = "default_class_output")]
    pub class_output: ClassOutput,
    /// Per-channel input transform: `(pixel * pixel_scale - mean) / std`.
    #[serde(default = "default_pixel_scale")]
    pub pixel_scale: f32,
    #[serde(default = "default_mean")]
    pub mean: [f32; 3],
    #[serde(default = "default_std")]
    pub std: [f32; 3],
}

fn default_side() -> u32 {
    DEFAULT_INPUT_SIDE
}
fn default_face_index() -> usize {
    1
}
fn default_class_output() -> ClassOutput {
    ClassOutput::Probabilities
}
fn default_pixel_scale() -> f32 {
    1.0 / 255.0
}
fn default_mean() -> [f32; 3] {
    [0.485, 0.456, 0.406]
}
fn default_std() -> [f32; 3] {
    [0.229, 0.224, 0.225]
}

impl OnnxConfig {
    pub fn new(path: impl Into<PathBuf>, input: &str, feature: &str, class: &str) -> Self {
        OnnxConfig {
            path: path.into(),
            input_tensor: input.to_owned(),
            feature_tensor: feature.to_owned(),
            class_tensor: class.to_owned(),
            input_side: default_side(),
            face_class_index: default_face_index(),
            class_output: default_class_output(),
            pixel_scale: default_pixel_scale(),
            mean: default_mean(),
            std: default_std(),
        }
    }
}

type Plan = SimplePlan<TypedFact, Box<dyn TypedOp>, TypedModel>;

pub struct OnnxBackend {
    config: OnnxConfig,
    descriptor: BackendDescriptor,
    plan: Plan,
}

fn backend_err(e: impl std::fmt::Display) -> Error {
    Error::Backend(format!("{e:#}"))
}

impl OnnxBackend {
    pub fn load(config: OnnxConfig) -> Result<Self> {
        if config.input_side == 0 {
            return Err(Error::invalid("input_side must be positive"));
        }
        if config.std.contains(&0.0) {
            return Err(Error::invalid("std entries must be non-zero"));
        }
        let plan = build_plan(&config)?;
        let descriptor = BackendDescriptor {
            input_side: config.input_side,
            feature_layer: config.feature_tensor.clone(),
            class_count: 2,
            concurrency_safe: false,
        };
        let backend = OnnxBackend { config, descriptor, plan };
        // one probe run catches shape problems at load time
        let (features, classes) = backend.run(&RgbImage::new(backend.config.input_side, backend.config.input_side))?;
        let k = classes.len();
        if backend.config.face_class_index >= k {
            return Err(Error::invalid(format!(
                "face_class_index {} out of range for {k} classes",
                backend.config.face_class_index
            )));
        }
        log::debug!("loaded {} with features {:?}", backend.config.path.display(), features.shape());
        Ok(backend)
    }

    pub fn config(&self) -> &OnnxConfig {
        &self.config
    }

    fn to_tensor(&self, image: &RgbImage) -> Tensor {
        let s = self.config.input_side as usize;
        let c = &self.config;
        tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, ch, y, x)| {
            let p = image.get_pixel(x as u32, y as u32)[ch] as f32;
            (p * c.pixel_scale - c.mean[ch]) / c.std[ch]
        })
        .into()
    }

    /// Feature maps and class probabilities for one image.
    fn run(&self, image: &RgbImage) -> Result<(FeatureMaps, Vec<f64>)> {
        let out = self.plan.run(tvec!(self.to_tensor(image).into())).map_err(backend_err)?;
        let feat = out[0].to_array_view::<f32>().map_err(backend_err)?;
        let shape = feat.shape().to_vec();
        let (c, h, w) = match shape.as_slice() {
            [1, c, h, w] | [c, h, w] => (*c, *h, *w),
            _ => return Err(Error::Backend(format!("feature tensor has shape {shape:?}, expected [1, C, H, W]"))),
        };
        // activations are read post-rectification
        let values = feat.iter().map(|v| (*v as f64).max(0.0)).collect();
        let features = FeatureMaps::new(c, h, w, values)?;
        let raw: Vec<f64> = out[1]
            .to_array_view::<f32>()
            .map_err(backend_err)?
            .iter()
            .map(|v| *v as f64)
            .collect();
        let probs = match self.config.class_output {
            ClassOutput::Probabilities => raw,
            ClassOutput::Logits => softmax(&raw),
        };
        Ok((features, probs))
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn build_plan(config: &OnnxConfig) -> Result<Plan> {
    let path: &Path = &config.path;
    if !path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("model file {} not found", path.display()),
        )));
    }
    let mut model = tract_onnx::onnx().model_for_path(path).map_err(backend_err)?;
    let input_index = model
        .input_outlets()
        .map_err(backend_err)?
        .iter()
        .position(|o| model.node(o.node).name == config.input_tensor)
        .ok_or_else(|| Error::MissingLayer(config.input_tensor.clone()))?;
    let s = config.input_side as usize;
    model
        .set_input_fact(input_index, f32::fact([1, 3, s, s]).into())
        .map_err(backend_err)?;
    let mut outlets = Vec::with_capacity(2);
    for name in [&config.feature_tensor, &config.class_tensor] {
        let outlet = model
            .find_outlet_label(name)
            .or_else(|| model.node_by_name(name).ok().map(|n| OutletId::new(n.id, 0)))
            .ok_or_else(|| Error::MissingLayer(name.clone()))?;
        outlets.push(outlet);
    }
    model.set_output_outlets(&outlets).map_err(backend_err)?;
    model
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(backend_err)
}

impl Backend for OnnxBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn infer_features(&self, image: &RgbImage) -> Result<FeatureMaps> {
        check_input(image, self.config.input_side, 0)?;
        Ok(self.run(image)?.0)
    }

    fn infer_class_scores(&self, batch: &[RgbImage]) -> Result<Vec<f64>> {
        for (i, img) in batch.iter().enumerate() {
            check_input(img, self.config.input_side, i)?;
        }
        batch
            .iter()
            .map(|img| Ok(self.run(img)?.1[self.config.face_class_index]))
            .collect()
    }
}
