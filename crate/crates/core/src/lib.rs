//! Face detection with object-specific channel heatmaps.
//!
//! A convolutional backend supplies one feature channel that lights up on
//! faces. Its activations are upsampled over a multi-resolution tiling of the
//! image and merged by per-pixel maximum into a heatmap. Square windows with a
//! high mean heatmap value become proposals, and a binary classifier plus
//! non-maximum suppression turns them into detections. The crate also ships
//! the training-data tooling and FDDB / PASCAL-style evaluation.

pub mod backend;
pub mod dataprep;
pub mod detector;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod plot;
pub mod proposal;
pub mod synthetic;

pub use backend::{Backend, BackendDescriptor, FeatureMaps, SyntheticBackend, SyntheticConfig};
#[cfg(feature = "onnx")]
pub use backend::{OnnxBackend, OnnxConfig};
pub use detector::{detect, detect_with_trace, nms, DetectConfig, Detection};
pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox, Canvas, Ellipse, PixelRect, Region};
pub use heatmap::{face_score, Heatmap, Scale, TilingConfig};
pub use proposal::{Proposal, ProposalConfig};
