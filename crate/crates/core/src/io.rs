//! File formats: JSONL box annotations, FDDB ellipse lists and fold files,
//! FDDB-style detection text, and the dataprep manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use crate::dataprep::{Label, Stage};
use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Ellipse, Region};

/// One line of a box annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
}

/// Ground truth for one image in either box or ellipse form.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: String,
    pub regions: Vec<Region>,
}

impl From<AnnotationRecord> for Annotation {
    fn from(r: AnnotationRecord) -> Self {
        Annotation {
            image_id: r.image_id,
            regions: r.boxes.into_iter().map(Region::Box).collect(),
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads `{image_id, boxes: [{x, y, w, h}]}` records, one per line. Blank
/// lines are skipped; every box is validated.
pub fn read_annotations_jsonl(path: &Path) -> Result<Vec<AnnotationRecord>> {
    parse_annotations_jsonl(&fs::read_to_string(path)?, path)
}

pub fn parse_annotations_jsonl(text: &str, path: &Path) -> Result<Vec<AnnotationRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord =
            serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        for b in &rec.boxes {
            b.validate().map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations_jsonl(path: &Path, records: &[AnnotationRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Splits into non-blank trimmed lines, keeping 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// FDDB ellipse lists: an image name, a face count, then one
/// `major minor angle cx cy 1` line per face. The major axis lies along the
/// angle direction.
pub fn parse_fddb_ellipses(text: &str, path: &Path) -> Result<Vec<Annotation>> {
    let mut lines = content_lines(text);
    let mut out = Vec::new();
    while let Some((_, name)) = lines.next() {
        let (ln, count) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing face count for {name}")))?;
        let count: usize = count
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad face count {count:?}")))?;
        let mut regions = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, ln, format!("{name}: fewer ellipses than declared")))?;
            let v = numbers(l, path, ln)?;
            if v.len() < 5 {
                return Err(parse_err(path, ln, "ellipse line needs 5 numbers"));
            }
            let e = Ellipse::new(v[3], v[4], v[1], v[0], v[2]).map_err(|e| parse_err(path, ln, e.to_string()))?;
            regions.push(Region::Ellipse(e));
        }
        out.push(Annotation {
            image_id: name.to_owned(),
            regions,
        });
    }
    Ok(out)
}

pub fn read_fddb_ellipses(path: &Path) -> Result<Vec<Annotation>> {
    parse_fddb_ellipses(&fs::read_to_string(path)?, path)
}

/// Image ids of one FDDB fold, in file order.
pub fn read_fold_list(path: &Path) -> Result<Vec<String>> {
    Ok(content_lines(&fs::read_to_string(path)?).map(|(_, l)| l.to_owned()).collect())
}

fn numbers(line: &str, path: &Path, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, ln, format!("bad number {t:?}"))))
        .collect()
}

/// Detections for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

/// FDDB detection text: image name, count, then `x y w h score` lines.
pub fn format_fddb_detections(records: &[ImageDetections]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.image_id);
        s.push('\n');
        s.push_str(&format!("{}\n", r.detections.len()));
        for d in &r.detections {
            let b = d.bbox;
            s.push_str(&format!("{} {} {} {} {}\n", b.x, b.y, b.w, b.h, d.score));
        }
    }
    s
}

pub fn write_fddb_detections(path: &Path, records: &[ImageDetections]) -> Result<()> {
    fs::write(path, format_fddb_detections(records))?;
    Ok(())
}

pub fn parse_fddb_detections(text: &str, path: &Path) -> Result<Vec<ImageDetections>> {
    let mut lines = content_lines(text);
    let mut out = Vec::new();
    while let Some((_, name)) = lines.next() {
        let (ln, count) = lines
            .next()
            .ok_or_else(|| parse_err(path, 0, format!("missing detection count for {name}")))?;
        let count: usize = count
            .parse()
            .map_err(|_| parse_err(path, ln, format!("bad detection count {count:?}")))?;
        let mut detections = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, ln, format!("{name}: fewer detections than declared")))?;
            let v = numbers(l, path, ln)?;
            if v.len() != 5 {
                return Err(parse_err(path, ln, "detection line needs x y w h score"));
            }
            let bbox = BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| parse_err(path, ln, e.to_string()))?;
            detections.push(Detection { bbox, score: v[4] });
        }
        out.push(ImageDetections {
            image_id: name.to_owned(),
            detections,
        });
    }
    Ok(out)
}

pub fn read_fddb_detections(path: &Path) -> Result<Vec<ImageDetections>> {
    parse_fddb_detections(&fs::read_to_string(path)?, path)
}

/// One JSON object per image: `{"image_id", "detections": [{"bbox", "score"}]}`.
pub fn write_detections_jsonl(path: &Path, records: &[ImageDetections]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// One manifest line. `path` is relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub label: Label,
    pub path: String,
    pub source: String,
    pub op: String,
    pub stage: Stage,
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path)?;
    content_lines(&text)
        .map(|(ln, l)| serde_json::from_str(l).map_err(|e| parse_err(path, ln, e.to_string())))
        .collect()
}

/// Finds the image for `image_id` under `dir`: the id as given, then with
/// `.jpg`, `.png`, `.jpeg` appended.
pub fn resolve_image_path(dir: &Path, image_id: &str) -> Option<PathBuf> {
    let direct = dir.join(image_id);
    if direct.is_file() {
        return Some(direct);
    }
    ["jpg", "png", "jpeg"]
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}
