use std::path::{Path, PathBuf};

use anyhow::Context;
use oscface_core::backend::Backend;
use oscface_core::detector::{detect_with_trace, DetectionTrace};
use oscface_core::io::{
    read_annotations_jsonl, resolve_image_path, write_detections_jsonl, write_fddb_detections, ImageDetections,
};
use rayon::prelude::*;

use super::{create_dir, file_stem_for, load_rgb, Status};
use crate::config::{config_error, RunConfig};

pub const DETECTIONS: &str = "detections.txt";
pub const DETECTIONS_JSONL: &str = "detections.jsonl";

struct Input {
    image_id: String,
    path: Option<PathBuf>,
}

fn inputs(cfg: &RunConfig, paths: &[PathBuf]) -> anyhow::Result<Vec<Input>> {
    if !paths.is_empty() {
        return Ok(paths
            .iter()
            .map(|p| Input {
                image_id: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                path: Some(p.clone()),
            })
            .collect());
    }
    if cfg.annotations.is_none() {
        return Err(config_error("give image paths or --annotations with --images"));
    }
    let ann = cfg.require_annotations()?;
    let dir = cfg.require_images_dir()?;
    let records = read_annotations_jsonl(ann).map_err(|e| config_error(e.to_string()))?;
    Ok(records
        .into_iter()
        .map(|r| Input {
            path: resolve_image_path(dir, &r.image_id),
            image_id: r.image_id,
        })
        .collect())
}

fn detect_one(backend: &dyn Backend, cfg: &RunConfig, input: &Input) -> anyhow::Result<DetectionTrace> {
    let path = input
        .path
        .as_deref()
        .with_context(|| format!("no image file for {}", input.image_id))?;
    let image = load_rgb(path)?;
    Ok(detect_with_trace(backend, &image, &cfg.detect)?)
}

pub fn run(cfg: &RunConfig, paths: &[PathBuf], emit_heatmaps: bool) -> anyhow::Result<Status> {
    let out = cfg.require_out()?;
    let inputs = inputs(cfg, paths)?;
    let backend = cfg.backend.load()?;
    let channels = backend.infer_features(&image::RgbImage::new(
        backend.descriptor().input_side,
        backend.descriptor().input_side,
    ))?;
    if cfg.detect.osc_channel >= channels.channels() {
        return Err(config_error(format!(
            "osc_channel {} out of range for {} channels",
            cfg.detect.osc_channel,
            channels.channels()
        )));
    }
    create_dir(out)?;
    let heatmap_dir = out.join("heatmaps");
    if emit_heatmaps {
        create_dir(&heatmap_dir)?;
    }

    let b = backend.as_ref();
    let traces: Vec<anyhow::Result<DetectionTrace>> = if b.descriptor().concurrency_safe {
        inputs.par_iter().map(|i| detect_one(b, cfg, i)).collect()
    } else {
        inputs.iter().map(|i| detect_one(b, cfg, i)).collect()
    };

    let mut records = Vec::with_capacity(inputs.len());
    let mut failures = 0;
    for (input, trace) in inputs.iter().zip(traces) {
        match trace {
            Ok(t) => {
                if emit_heatmaps {
                    save_heatmap(&heatmap_dir, &input.image_id, &t)?;
                }
                records.push(ImageDetections {
                    image_id: input.image_id.clone(),
                    detections: t.detections,
                });
            }
            Err(e) => {
                log::error!("{}: {e:#}", input.image_id);
                failures += 1;
            }
        }
    }
    write_fddb_detections(&out.join(DETECTIONS), &records)?;
    write_detections_jsonl(&out.join(DETECTIONS_JSONL), &records)?;
    cfg.write_resolved(out)?;
    let total: usize = records.iter().map(|r| r.detections.len()).sum();
    log::info!("{total} detections in {} images ({failures} failed)", records.len());
    if failures > 0 && failures == inputs.len() {
        anyhow::bail!("every image failed");
    }
    Ok(Status::from_failures(failures))
}

fn save_heatmap(dir: &Path, image_id: &str, t: &DetectionTrace) -> anyhow::Result<()> {
    let path = dir.join(format!("{}.png", file_stem_for(image_id)));
    t.heatmap
        .save_png(&path)
        .with_context(|| format!("writing {}", path.display()))
}
