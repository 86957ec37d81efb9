use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::augment::{AugmentMode, Transform};
use super::AnnotatedImage;
use crate::error::{Error, Result};
use crate::imaging::{
    bbox_to_square_center, canny_edges, window_count, Patch, Point, CHANNELS, DEFAULT_HIGH,
    DEFAULT_LOW,
};
use crate::nncore::{PatchSource, MOTH_CLASS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    Moth,
}

impl Label {
    pub fn class(self) -> usize {
        match self {
            Self::Moth => MOTH_CLASS,
            Self::Background => 1 - MOTH_CLASS,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Moth => "moth",
            Self::Background => "background",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moth" => Ok(Self::Moth),
            "background" => Ok(Self::Background),
            _ => Err(Error::Config(format!("unknown label {s:?}"))),
        }
    }
}

/// Provenance of one training patch: enough to regenerate its pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRecord {
    /// Index into the image list the set was built from.
    pub image: usize,
    pub center: Point,
    pub side: usize,
    pub transform: Transform,
    pub label: Label,
}

impl PatchRecord {
    pub fn regenerate(&self, images: &[AnnotatedImage]) -> Result<Patch> {
        let img = images
            .get(self.image)
            .ok_or_else(|| Error::Extraction(format!("image index {} out of range", self.image)))?;
        self.transform.extract(&img.image, self.center, self.side)
    }
}

/// Patches stored as provenance records; pixels are produced on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSet {
    pub records: Vec<PatchRecord>,
}

impl PatchSet {
    pub fn new(records: Vec<PatchRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn extend(&mut self, other: PatchSet) {
        self.records.extend(other.records);
    }

    /// Regenerates every patch.
    pub fn materialize(&self, images: &[AnnotatedImage]) -> Result<Vec<Patch>> {
        self.records.par_iter().map(|r| r.regenerate(images)).collect()
    }

    /// Replaces each untransformed record by its variants under `mode`.
    pub fn augmented(&self, mode: AugmentMode) -> Self {
        let ids = mode.transform_ids();
        let records = self
            .records
            .iter()
            .flat_map(|r| {
                ids.iter().map(move |&id| PatchRecord {
                    transform: Transform::from_id(id).unwrap_or(Transform::IDENTITY),
                    ..*r
                })
            })
            .collect();
        Self { records }
    }

    /// Borrowing view usable as classifier training data.
    pub fn view<'a>(&'a self, images: &'a [AnnotatedImage]) -> Result<PatchView<'a>> {
        let side = self.records.first().map_or(0, |r| r.side);
        if let Some(r) = self.records.iter().find(|r| r.side != side) {
            return Err(Error::Dimension(format!(
                "mixed patch sides {side} and {} in one set",
                r.side
            )));
        }
        if let Some(r) = self.records.iter().find(|r| r.image >= images.len()) {
            return Err(Error::Extraction(format!("image index {} out of range", r.image)));
        }
        Ok(PatchView {
            set: self,
            images,
            side,
        })
    }
}

/// A `PatchSet` bound to its source images.
#[derive(Debug, Clone, Copy)]
pub struct PatchView<'a> {
    set: &'a PatchSet,
    images: &'a [AnnotatedImage],
    side: usize,
}

impl PatchView<'_> {
    pub fn input_len(&self) -> usize {
        self.side * self.side * CHANNELS
    }
}

impl<T: Scalar> PatchSource<T> for PatchView<'_> {
    fn len(&self) -> usize {
        self.set.len()
    }

    fn label(&self, i: usize) -> usize {
        self.set.records[i].label.class()
    }

    fn fill(&self, i: usize, out: &mut [T]) {
        // indices and sides were checked when the view was built
        let r = &self.set.records[i];
        let patch = r
            .transform
            .extract(&self.images[r.image].image, r.center, r.side)
            .expect("view records were validated");
        patch.write_input(out);
    }
}

/// One moth patch per ground-truth box, centred on the box.
pub fn extract_positive_patches(
    images: &[AnnotatedImage],
    indices: &[usize],
    side: usize,
) -> Result<PatchSet> {
    let mut records = Vec::new();
    for &i in indices {
        let img = &images[i];
        for bb in &img.boxes {
            let center = bbox_to_square_center(bb);
            crate::imaging::window_origin(img.image.width(), img.image.height(), center, side)?;
            records.push(PatchRecord {
                image: i,
                center,
                side,
                transform: Transform::IDENTITY,
                label: Label::Moth,
            });
        }
    }
    Ok(PatchSet { records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningConfig {
    pub canny_low: f64,
    pub canny_high: f64,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            canny_low: DEFAULT_LOW,
            canny_high: DEFAULT_HIGH,
            seed: 0,
        }
    }
}

/// Background patches from moth-free images, preferring edge-dense windows.
///
/// Candidates lie on a grid with stride `side / 2`. The `2 × target`
/// densest candidates form the pool, which is subsampled uniformly to
/// `target`. Windows without edges are never chosen unless no image has any
/// edge, in which case random centres are drawn.
pub fn mine_negative_patches(
    images: &[AnnotatedImage],
    indices: &[usize],
    side: usize,
    target: usize,
    cfg: &MiningConfig,
) -> Result<PatchSet> {
    if let Some(&i) = indices.iter().find(|&&i| images[i].has_moth()) {
        return Err(Error::Extraction(format!(
            "negative mining on {} which has moth boxes",
            images[i].path
        )));
    }
    if target == 0 || indices.is_empty() {
        return Ok(PatchSet::default());
    }
    let stride = (side / 2).max(1);
    let half = (side / 2) as i64;
    let mut candidates: Vec<(u32, usize, Point)> = indices
        .par_iter()
        .map(|&i| -> Result<Vec<(u32, usize, Point)>> {
            let img = &images[i].image;
            let (w, h) = img.dimensions();
            crate::imaging::window_origin(w, h, Point::new(0, 0), side)?;
            let edges = canny_edges(img, cfg.canny_low, cfg.canny_high);
            let integral = edges.integral();
            let mut out = Vec::new();
            for y0 in (0..=h as usize - side).step_by(stride) {
                for x0 in (0..=w as usize - side).step_by(stride) {
                    let s = side as u32;
                    let n = window_count(&integral, w, x0 as u32, y0 as u32, s, s);
                    if n > 0 {
                        out.push((n, i, Point::new(x0 as i64 + half, y0 as i64 + half)));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let record = |image, center| PatchRecord {
        image,
        center,
        side,
        transform: Transform::IDENTITY,
        label: Label::Background,
    };
    if candidates.is_empty() {
        log::warn!("no edge pixels in {} images; using random negative centres", indices.len());
        let records = (0..target)
            .map(|_| {
                let i = indices[rng.random_range(0..indices.len())];
                let (w, h) = images[i].image.dimensions();
                let x0 = rng.random_range(0..=w as usize - side) as i64;
                let y0 = rng.random_range(0..=h as usize - side) as i64;
                record(i, Point::new(x0 + half, y0 + half))
            })
            .collect();
        return Ok(PatchSet { records });
    }
    candidates.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.y.cmp(&b.2.y))
            .then(a.2.x.cmp(&b.2.x))
    });
    candidates.truncate(target.saturating_mul(2));
    let chosen: Vec<usize> = if candidates.len() <= target {
        (0..candidates.len()).collect()
    } else {
        let mut v = sample(&mut rng, candidates.len(), target).into_vec();
        v.sort_unstable();
        v
    };
    Ok(PatchSet {
        records: chosen
            .into_iter()
            .map(|k| record(candidates[k].1, candidates[k].2))
            .collect(),
    })
}

pub const MANIFEST_HEADER: [&str; 6] = ["image_path", "cx", "cy", "side", "transform_id", "label"];

pub fn write_manifest(path: &Path, set: &PatchSet, images: &[AnnotatedImage]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{}", MANIFEST_HEADER.join(","))?;
    for r in &set.records {
        let img = images
            .get(r.image)
            .ok_or_else(|| Error::Extraction(format!("image index {} out of range", r.image)))?;
        writeln!(
            f,
            "{},{},{},{},{},{}",
            img.path,
            r.center.x,
            r.center.y,
            r.side,
            r.transform.id(),
            r.label
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a manifest, resolving image paths against `images`.
pub fn read_manifest(path: &Path, images: &[AnnotatedImage]) -> Result<PatchSet> {
    let bad = |msg: String| Error::Format {
        kind: "manifest",
        path: path.to_path_buf(),
        msg,
    };
    let index: HashMap<&str, usize> = images
        .iter()
        .enumerate()
        .map(|(i, a)| (a.path.as_str(), i))
        .collect();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != MANIFEST_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != 6 {
            return Err(bad(format!("row {row} has {} fields", rec.len())));
        }
        let image = *index
            .get(&rec[0])
            .ok_or_else(|| bad(format!("row {row}: unknown image {}", &rec[0])))?;
        let num = |k: usize| -> Result<i64> {
            rec[k].parse::<i64>().map_err(|e| bad(format!("row {row}: {e}")))
        };
        let side = usize::try_from(num(3)?).map_err(|e| bad(format!("row {row}: {e}")))?;
        let id = u8::try_from(num(4)?).map_err(|e| bad(format!("row {row}: {e}")))?;
        records.push(PatchRecord {
            image,
            center: Point::new(num(1)?, num(2)?),
            side,
            transform: Transform::from_id(id).map_err(|e| bad(format!("row {row}: {e}")))?,
            label: rec[5].parse().map_err(|e| bad(format!("row {row}: {e}")))?,
        });
    }
    Ok(PatchSet { records })
}
