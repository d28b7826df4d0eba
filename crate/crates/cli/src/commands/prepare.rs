use std::path::Path;

use anyhow::Context;
use oscface_core::dataprep::{derive_seed, prepare_image, Label};
use oscface_core::io::{read_annotations_jsonl, resolve_image_path, write_manifest, AnnotationRecord, ManifestRecord};
use rayon::prelude::*;

use super::{create_dir, file_stem_for, load_rgb, Status};
use crate::config::{config_error, RunConfig};

pub const MANIFEST: &str = "manifest.jsonl";

pub fn run(cfg: &RunConfig) -> anyhow::Result<Status> {
    let ann_path = cfg.require_annotations()?;
    let images = cfg.require_images_dir()?;
    let out = cfg.require_out()?;
    let records = read_annotations_jsonl(ann_path).map_err(|e| config_error(e.to_string()))?;
    for label in [Label::Pos, Label::Neg] {
        create_dir(&out.join(label.dir()))?;
    }

    let per_image: Vec<anyhow::Result<Vec<ManifestRecord>>> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| prepare_one(cfg, images, out, rec, derive_seed(cfg.seed, i as u64)))
        .collect();

    let mut manifest = Vec::new();
    let mut failures = 0;
    for (rec, result) in records.iter().zip(per_image) {
        match result {
            Ok(m) => manifest.extend(m),
            Err(e) => {
                log::error!("{}: {e:#}", rec.image_id);
                failures += 1;
            }
        }
    }
    write_manifest(&out.join(MANIFEST), &manifest)?;
    cfg.write_resolved(out)?;
    log::info!(
        "wrote {} samples from {} images ({failures} failed)",
        manifest.len(),
        records.len()
    );
    if failures > 0 && failures == records.len() {
        anyhow::bail!("every image failed");
    }
    Ok(Status::from_failures(failures))
}

fn prepare_one(
    cfg: &RunConfig,
    images: &Path,
    out: &Path,
    rec: &AnnotationRecord,
    seed: u64,
) -> anyhow::Result<Vec<ManifestRecord>> {
    let path = resolve_image_path(images, &rec.image_id)
        .with_context(|| format!("no image for {} under {}", rec.image_id, images.display()))?;
    let image = load_rgb(&path)?;
    let (samples, problems) = prepare_image(&image, &rec.boxes, &cfg.dataprep, seed);
    for p in problems {
        log::warn!("{}: {p}", rec.image_id);
    }
    let stem = file_stem_for(&rec.image_id);
    let mut counters = [0usize; 2];
    let mut manifest = Vec::with_capacity(samples.len());
    for s in samples {
        let k = &mut counters[s.label as usize];
        let rel = format!("{}/{stem}_{k}.png", s.label.dir());
        *k += 1;
        s.image
            .save(out.join(&rel))
            .with_context(|| format!("writing {rel}"))?;
        manifest.push(ManifestRecord {
            label: s.label,
            path: rel,
            source: path.display().to_string(),
            op: s.op,
            stage: s.stage,
        });
    }
    Ok(manifest)
}
