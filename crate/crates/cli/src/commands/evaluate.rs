use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oscface_core::evaluator::{
    pascal_ap, precision_recall, roc_curve, roc_curves_by_fold, BoxImage, DetectionShape, EvalCurve, GreedyMatcher,
    ImageEval, Protocol,
};
use oscface_core::geometry::{Canvas, Region};
use oscface_core::io::{read_annotations_jsonl, read_fddb_detections, read_fddb_ellipses, read_fold_list, Annotation};
use oscface_core::plot::{self, Axes, Series};
use serde_json::json;

use super::{create_dir, Status};
use crate::config::{config_error, RunConfig};
use crate::{ProtocolArg, ShapeArg};

const PLOT_SIZE: (u32, u32) = (640, 480);
/// False-positive budgets reported in the ROC summary.
const FP_BUDGETS: [usize; 5] = [0, 50, 100, 500, 1000];

pub struct EvalArgs {
    pub detections: PathBuf,
    pub protocol: ProtocolArg,
    pub detection_shape: Option<ShapeArg>,
    pub folds: Vec<PathBuf>,
}

fn read_ground_truth(path: &Path) -> anyhow::Result<(Vec<Annotation>, bool)> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let anns = if is_jsonl {
        read_annotations_jsonl(path)?.into_iter().map(Annotation::from).collect()
    } else {
        read_fddb_ellipses(path)?
    };
    Ok((anns, !is_jsonl))
}

fn check_same_ids(dets: &BTreeSet<&str>, gts: &BTreeSet<&str>) -> anyhow::Result<()> {
    let missing: Vec<&&str> = gts.difference(dets).take(5).collect();
    let extra: Vec<&&str> = dets.difference(gts).take(5).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    anyhow::bail!(
        "image id sets differ: {} annotated ids have no detection record (e.g. {missing:?}), \
         {} detection ids have no annotation (e.g. {extra:?})",
        gts.difference(dets).count(),
        dets.difference(gts).count()
    )
}

pub fn run(cfg: &RunConfig, args: &EvalArgs) -> anyhow::Result<Status> {
    let out = cfg.require_out()?;
    let ann_path = cfg.require_annotations()?;
    crate::config::require_exists(&args.detections)?;
    let dets = read_fddb_detections(&args.detections)?;
    let (anns, ellipses) = read_ground_truth(ann_path)?;

    let det_ids: BTreeSet<&str> = dets.iter().map(|d| d.image_id.as_str()).collect();
    let gt_ids: BTreeSet<&str> = anns.iter().map(|a| a.image_id.as_str()).collect();
    if det_ids.len() != dets.len() || gt_ids.len() != anns.len() {
        anyhow::bail!("duplicate image ids in the inputs");
    }
    check_same_ids(&det_ids, &gt_ids)?;
    let det_by_id: HashMap<&str, &Vec<_>> = dets.iter().map(|d| (d.image_id.as_str(), &d.detections)).collect();

    create_dir(out)?;
    match args.protocol {
        ProtocolArg::Pascal => {
            if ellipses {
                return Err(config_error("the pascal protocol needs box annotations (.jsonl)"));
            }
            let images: Vec<BoxImage> = anns
                .iter()
                .map(|a| BoxImage {
                    detections: det_by_id[a.image_id.as_str()].clone(),
                    ground_truth: a
                        .regions
                        .iter()
                        .filter_map(|r| match r {
                            Region::Box(b) => Some(*b),
                            Region::Ellipse(_) => None,
                        })
                        .collect(),
                })
                .collect();
            let pr = precision_recall(&images)?;
            let ap = pascal_ap(&images)?;
            let mut csv = String::from("threshold,precision,recall\n");
            for p in &pr {
                writeln!(csv, "{},{},{}", p.threshold, p.precision, p.recall)?;
            }
            std::fs::write(out.join("pr.csv"), csv)?;
            let series = [Series { points: pr.iter().map(|p| (p.recall, p.precision)).collect() }];
            plot::save(&series, Axes { x: (0.0, 1.0), y: (0.0, 1.0) }, PLOT_SIZE.0, PLOT_SIZE.1, &out.join("pr.png"))?;
            let summary = json!({
                "protocol": "pascal",
                "images": images.len(),
                "ground_truth": images.iter().map(|i| i.ground_truth.len()).sum::<usize>(),
                "detections": pr.len(),
                "ap": ap,
            });
            write_summary(out, &summary)?;
            println!("AP {ap:.4}");
        }
        ProtocolArg::FddbDiscrete | ProtocolArg::FddbContinuous => {
            let protocol = match args.protocol {
                ProtocolArg::FddbDiscrete => Protocol::Discrete,
                _ => Protocol::Continuous,
            };
            let shape = match args.detection_shape {
                Some(ShapeArg::Box) => DetectionShape::Box,
                Some(ShapeArg::Ellipse) => DetectionShape::Ellipse,
                None if ellipses => DetectionShape::Ellipse,
                None => DetectionShape::Box,
            };
            let fold_of = fold_index(&args.folds)?;
            let images = anns
                .iter()
                .map(|a| {
                    let detections = det_by_id[a.image_id.as_str()].clone();
                    let det_regions: Vec<Region> = detections.iter().map(|d| shape.region(d)).collect();
                    let fold = match &fold_of {
                        Some(m) => *m.get(a.image_id.as_str()).ok_or_else(|| {
                            config_error(format!("{} is not listed in any fold", a.image_id))
                        })?,
                        None => 0,
                    };
                    Ok(ImageEval {
                        image_id: a.image_id.clone(),
                        fold,
                        canvas: Canvas::enclosing(a.regions.iter().chain(&det_regions)),
                        detections,
                        ground_truth: a.regions.clone(),
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let matcher = GreedyMatcher::default();
            let curve = roc_curve(&images, protocol, shape, &matcher)?;
            std::fs::write(out.join("roc.csv"), curve.to_csv())?;
            if fold_of.is_some() {
                for (f, c) in roc_curves_by_fold(&images, protocol, shape, &matcher)? {
                    std::fs::write(out.join(format!("roc_fold{}.csv", f + 1)), c.to_csv())?;
                }
            }
            save_roc_plot(&curve, &out.join("roc.png"))?;
            let tpr_at: serde_json::Map<String, serde_json::Value> =
                FP_BUDGETS.iter().map(|&n| (n.to_string(), json!(curve.tpr_at(n)))).collect();
            let last = curve.points.last();
            let summary = json!({
                "protocol": match protocol { Protocol::Discrete => "fddb-discrete", Protocol::Continuous => "fddb-continuous" },
                "detection_shape": shape,
                "images": images.len(),
                "ground_truth": images.iter().map(|i| i.ground_truth.len()).sum::<usize>(),
                "detections": images.iter().map(|i| i.detections.len()).sum::<usize>(),
                "tpr_at_fp": tpr_at,
                "final_tpr": last.map_or(0.0, |p| p.tpr),
                "final_fp": last.map_or(0, |p| p.fp_count),
            });
            write_summary(out, &summary)?;
            println!("TPR {:.4} at {} false positives", last.map_or(0.0, |p| p.tpr), last.map_or(0, |p| p.fp_count));
        }
    }
    cfg.write_resolved(out)?;
    Ok(Status::Complete)
}

fn fold_index(folds: &[PathBuf]) -> anyhow::Result<Option<HashMap<String, usize>>> {
    if folds.is_empty() {
        return Ok(None);
    }
    let mut map = HashMap::new();
    for (k, path) in folds.iter().enumerate() {
        for id in read_fold_list(path)? {
            map.insert(id, k);
        }
    }
    Ok(Some(map))
}

fn save_roc_plot(curve: &EvalCurve, path: &Path) -> anyhow::Result<()> {
    let mut points = vec![(0.0, 0.0)];
    points.extend(curve.points.iter().map(|p| (p.fp_count as f64, p.tpr)));
    let series = [Series { points }];
    plot::save(&series, Axes::fit_unit_y(&series), PLOT_SIZE.0, PLOT_SIZE.1, path)?;
    Ok(())
}

fn write_summary(out: &Path, summary: &serde_json::Value) -> anyhow::Result<()> {
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    Ok(())
}
