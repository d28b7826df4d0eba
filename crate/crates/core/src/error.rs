use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("invalid ellipse: {0}")]
    InvalidEllipse(&'static str),

    #[error("region has no pixels on the {width}x{height} canvas")]
    EmptyRegion { width: u32, height: u32 },

    #[error("box lies outside the {width}x{height} heatmap")]
    BoxOutsideHeatmap { width: usize, height: usize },

    #[error("boxes cover every pixel of the heatmap")]
    NoOutsidePixels,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image {index} is {actual_w}x{actual_h}, backend expects {expected}x{expected}")]
    WrongInputSize {
        index: usize,
        expected: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("model has no tensor named `{0}`")]
    MissingLayer(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("classifying proposal {index}: {source}")]
    Proposal {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no usable images: every dataset entry was skipped")]
    EmptyDataset,

    #[error("could not place a crop at IoU {target} within {attempts} attempts")]
    InfeasibleTarget { target: f64, attempts: usize },

    #[error("background {bg_w}x{bg_h} is smaller than the padded output {out_w}x{out_h}")]
    BackgroundTooSmall {
        bg_w: u32,
        bg_h: u32,
        out_w: u32,
        out_h: u32,
    },

    #[error("no ground truth to evaluate against")]
    NoGroundTruth,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
