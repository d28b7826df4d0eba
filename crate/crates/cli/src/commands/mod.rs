pub mod detect;
pub mod evaluate;
pub mod prepare;
pub mod rank;

use std::path::Path;

use anyhow::Context;
use image::RgbImage;

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some inputs failed and were skipped.
    Partial,
}

impl Status {
    pub fn from_failures(failures: usize) -> Status {
        if failures == 0 {
            Status::Complete
        } else {
            Status::Partial
        }
    }
}

pub fn load_rgb(path: &Path) -> anyhow::Result<RgbImage> {
    Ok(image::open(path)
        .with_context(|| format!("decoding {}", path.display()))?
        .to_rgb8())
}

/// Image ids may contain path separators (FDDB ids do); flatten them for file names.
pub fn file_stem_for(image_id: &str) -> String {
    image_id.replace(['/', '\\'], "_")
}

pub fn create_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
