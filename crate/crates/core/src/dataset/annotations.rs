//! Annotation files: header `image_path,x,y,w,h`, one row per box. An image
//! without moths is a single row with the four box fields empty. Image paths
//! are resolved relative to the annotation file's directory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::{io::load_image, BoundingBox, Image};

pub const ANNOTATION_HEADER: [&str; 5] = ["image_path", "x", "y", "w", "h"];

/// An image with its ground-truth moth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    /// Path as written in the annotation file.
    pub path: String,
    pub image: Image,
    pub boxes: Vec<BoundingBox>,
}

impl AnnotatedImage {
    pub fn has_moth(&self) -> bool {
        !self.boxes.is_empty()
    }
}

/// One image's entry in an annotation file, before the pixels are loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationEntry {
    pub path: String,
    pub boxes: Vec<BoundingBox>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        kind: "annotation",
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Reads entries in first-appearance order of their image paths; box order
/// within an image follows the file.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ANNOTATION_HEADER {
        return Err(format_err(path, format!("unexpected header {header:?}")));
    }
    let mut order: Vec<String> = Vec::new();
    let mut boxes: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(format_err(path, format!("row {} has {} fields", line + 2, rec.len())));
        }
        let img = rec[0].to_owned();
        if img.is_empty() {
            return Err(format_err(path, format!("row {} has no image path", line + 2)));
        }
        let entry = boxes.entry(img.clone()).or_insert_with(|| {
            order.push(img.clone());
            Vec::new()
        });
        let fields: Vec<&str> = (1..5).map(|i| &rec[i]).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let nums: Vec<i64> = fields
            .iter()
            .map(|f| f.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", line + 2)))?;
        let bb = BoundingBox::new(nums[0], nums[1], nums[2], nums[3]);
        if !bb.is_valid() {
            return Err(format_err(path, format!("row {}: empty box", line + 2)));
        }
        entry.push(bb);
    }
    Ok(order
        .into_iter()
        .map(|p| {
            let b = boxes.remove(&p).unwrap_or_default();
            AnnotationEntry { path: p, boxes: b }
        })
        .collect())
}

pub fn write_annotations(path: &Path, entries: &[AnnotationEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{}", ANNOTATION_HEADER.join(","))?;
    for e in entries {
        if e.boxes.is_empty() {
            writeln!(f, "{},,,,", e.path)?;
        }
        for b in &e.boxes {
            writeln!(f, "{},{},{},{},{}", e.path, b.x, b.y, b.w, b.h)?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Resolves an entry's image path against the annotation file location.
pub fn resolve_image_path(annotation_file: &Path, image_path: &str) -> PathBuf {
    let p = Path::new(image_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        annotation_file
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

/// Reads an annotation file and loads every referenced image. Boxes must
/// intersect their image.
pub fn load_dataset(annotation_file: &Path) -> Result<Vec<AnnotatedImage>> {
    read_annotations(annotation_file)?
        .into_iter()
        .map(|e| {
            let image = load_image(&resolve_image_path(annotation_file, &e.path))?;
            if let Some(b) = e
                .boxes
                .iter()
                .find(|b| !b.intersects_image(image.width(), image.height()))
            {
                return Err(format_err(
                    annotation_file,
                    format!("box {b:?} lies outside {}", e.path),
                ));
            }
            Ok(AnnotatedImage {
                path: e.path,
                image,
                boxes: e.boxes,
            })
        })
        .collect()
}
