//! The JSON run configuration. Command-line flags override file values, and
//! every run writes the resolved result next to its outputs.

use std::path::{Path, PathBuf};

use anyhow::Context;
use oscface_core::backend::{Backend, SyntheticBackend, SyntheticConfig};
use oscface_core::dataprep::PrepConfig;
use oscface_core::DetectConfig;
#[cfg(feature = "onnx")]
use oscface_core::{OnnxBackend, OnnxConfig};
use serde::{Deserialize, Serialize};

/// Marks errors that map to the "invalid config" exit code.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Synthetic(SyntheticConfig),
    #[cfg(feature = "onnx")]
    Onnx(OnnxConfig),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Synthetic(SyntheticConfig::default())
    }
}

impl BackendSpec {
    pub fn load(&self) -> anyhow::Result<Box<dyn Backend>> {
        match self {
            BackendSpec::Synthetic(c) => Ok(Box::new(
                SyntheticBackend::new(c.clone()).map_err(|e| config_error(format!("synthetic backend: {e}")))?,
            )),
            #[cfg(feature = "onnx")]
            BackendSpec::Onnx(c) => Ok(Box::new(
                OnnxBackend::load(c.clone())
                    .map_err(|e| config_error(format!("model {}: {e}", c.path.display())))?,
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    /// Images drawn (seeded, without replacement) from the dataset; all when unset.
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSpec,
    pub detect: DetectConfig,
    pub dataprep: PrepConfig,
    pub ranking: RankingConfig,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub annotations: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_error(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.detect.validate().map_err(|e| config_error(format!("detect: {e}")))?;
        self.dataprep.validate().map_err(|e| config_error(format!("dataprep: {e}")))?;
        if self.jobs == Some(0) {
            return Err(config_error("jobs must be at least 1"));
        }
        if self.ranking.sample_size == Some(0) {
            return Err(config_error("ranking.sample_size must be at least 1"));
        }
        Ok(())
    }

    pub fn require_out(&self) -> anyhow::Result<&Path> {
        self.out.as_deref().ok_or_else(|| config_error("an output directory is required (--out)"))
    }

    pub fn require_annotations(&self) -> anyhow::Result<&Path> {
        let p = self
            .annotations
            .as_deref()
            .ok_or_else(|| config_error("an annotation file is required (--annotations)"))?;
        require_exists(p)?;
        Ok(p)
    }

    pub fn require_images_dir(&self) -> anyhow::Result<&Path> {
        let p = self
            .images_dir
            .as_deref()
            .ok_or_else(|| config_error("an image directory is required (--images)"))?;
        require_exists(p)?;
        Ok(p)
    }

    /// Writes the resolved configuration as `config.json` in `dir`.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

pub fn require_exists(p: &Path) -> anyhow::Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(config_error(format!("{} does not exist", p.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"kind\":\"synthetic\""));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 9, "detect": {"nms_iou": 0.4}}"#).unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.detect.nms_iou, 0.4);
        assert_eq!(partial.detect.osc_channel, 196);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 9}"#).is_err());
    }
}
