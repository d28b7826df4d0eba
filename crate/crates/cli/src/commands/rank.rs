use std::fmt::Write as _;

use anyhow::Context;
use oscface_core::heatmap::{rank_channels, AnnotatedImage, ChannelScore};
use oscface_core::io::{read_annotations_jsonl, resolve_image_path};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{load_rgb, Status};
use crate::config::{config_error, RunConfig};

#[derive(Serialize)]
struct Report<'a> {
    osc_channel: usize,
    images: usize,
    channels: &'a [ChannelScore],
}

pub fn run(cfg: &RunConfig) -> anyhow::Result<Status> {
    let ann_path = cfg.require_annotations()?;
    let images = cfg.require_images_dir()?;
    let out = cfg.require_out()?;
    let mut records = read_annotations_jsonl(ann_path).map_err(|e| config_error(e.to_string()))?;
    if let Some(k) = cfg.ranking.sample_size.filter(|&k| k < records.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked = rand::seq::index::sample(&mut rng, records.len(), k).into_vec();
        picked.sort_unstable();
        records = picked.into_iter().map(|i| records[i].clone()).collect();
    }
    let backend = cfg.backend.load()?;

    let loaded: Vec<anyhow::Result<AnnotatedImage>> = records
        .par_iter()
        .map(|rec| {
            let path = resolve_image_path(images, &rec.image_id)
                .with_context(|| format!("no image for {}", rec.image_id))?;
            Ok(AnnotatedImage {
                image: load_rgb(&path)?,
                boxes: rec.boxes.clone(),
            })
        })
        .collect();
    let mut dataset = Vec::with_capacity(loaded.len());
    let mut failures = 0;
    for r in loaded {
        match r {
            Ok(a) => dataset.push(a),
            Err(e) => {
                log::error!("{e:#}");
                failures += 1;
            }
        }
    }
    let scores = rank_channels(&dataset, backend.as_ref())?;

    super::create_dir(out)?;
    let mut csv = String::from("rank,channel,inside,outside\n");
    for (r, s) in scores.iter().enumerate() {
        writeln!(csv, "{},{},{},{}", r + 1, s.channel, s.inside, s.outside)?;
    }
    std::fs::write(out.join("channel_ranking.csv"), csv)?;
    let report = Report {
        osc_channel: scores[0].channel,
        images: dataset.len(),
        channels: &scores,
    };
    std::fs::write(out.join("channel_ranking.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    cfg.write_resolved(out)?;
    println!("osc_channel {}", scores[0].channel);
    Ok(Status::from_failures(failures))
}
