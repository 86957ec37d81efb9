//! Seeded generator of synthetic sticky-trap scenes with moth boxes.
//!
//! Each scene is a pure function of the configuration seed and the scene
//! index: a textured liner, an optional lure disc, leaves, flies and moths,
//! followed by an illumination tint, blur and pixel noise.

mod config;
mod render;

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

pub use config::{Range, SceneConfig};

use crate::dataset::{write_annotations, AnnotatedImage, AnnotationEntry};
use crate::error::{Error, Result};
use crate::imaging::io::save_png;
use render::{poisson, render, scene_rng};

/// Split names, in train/validation/test order.
pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];
/// Image counts of the three splits.
pub const DEFAULT_COUNTS: [usize; 3] = [110, 27, 40];

/// Renders scene `index` with a Poisson moth count of the configured mean.
pub fn generate_scene(cfg: &SceneConfig, index: u64) -> Result<AnnotatedImage> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, index);
    let n = poisson(&mut rng, cfg.mean_moths);
    Ok(scene(cfg, index, &mut rng, n))
}

fn scene(cfg: &SceneConfig, index: u64, rng: &mut rand_chacha::ChaCha8Rng, moths: usize) -> AnnotatedImage {
    let (image, boxes) = render(cfg, rng, moths);
    AnnotatedImage {
        path: format!("scene_{index:04}.png"),
        image,
        boxes,
    }
}

/// Moth count of dataset scene `index`: zero with the no-moth probability,
/// otherwise a positive Poisson draw whose mean keeps the overall average
/// at `mean_moths`.
pub fn planned_moths(cfg: &SceneConfig, index: u64) -> usize {
    let mut rng = scene_rng(cfg.seed, index);
    plan(cfg, &mut rng)
}

fn plan(cfg: &SceneConfig, rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    if cfg.mean_moths <= 0.0 || rng.random_bool(cfg.no_moth_fraction) {
        return 0;
    }
    let mean = cfg.mean_moths / (1.0 - cfg.no_moth_fraction);
    loop {
        let n = poisson(rng, mean);
        if n > 0 {
            return n;
        }
    }
}

/// Scene used as dataset image `index`.
pub fn dataset_scene(cfg: &SceneConfig, index: u64) -> Result<AnnotatedImage> {
    cfg.validate()?;
    let mut rng = scene_rng(cfg.seed, index);
    let n = plan(cfg, &mut rng);
    Ok(scene(cfg, index, &mut rng, n))
}

/// Annotation files written by `generate_dataset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub annotations: [PathBuf; 3],
}

/// Writes `images/scene_NNNN.png` and `train.csv`, `val.csv`, `test.csv`
/// under `out`. Scene indices run consecutively across the splits.
pub fn generate_dataset(cfg: &SceneConfig, counts: [usize; 3], out: &Path) -> Result<DatasetFiles> {
    cfg.validate()?;
    if counts.contains(&0) {
        return Err(Error::Config(format!("split counts {counts:?} must be positive")));
    }
    let img_dir = out.join("images");
    fs::create_dir_all(&img_dir)?;
    let mut start = 0u64;
    let mut files: Vec<PathBuf> = Vec::new();
    for (name, &n) in SPLIT_NAMES.iter().zip(&counts) {
        let entries: Vec<AnnotationEntry> = (start..start + n as u64)
            .into_par_iter()
            .map(|i| -> Result<AnnotationEntry> {
                let s = dataset_scene(cfg, i)?;
                let rel = format!("images/{}", s.path);
                save_png(&s.image, &out.join(&rel))?;
                Ok(AnnotationEntry {
                    path: rel,
                    boxes: s.boxes,
                })
            })
            .collect::<Result<_>>()?;
        let path = out.join(format!("{name}.csv"));
        write_annotations(&path, &entries)?;
        log::info!(
            "{name}: {} images, {} moths",
            entries.len(),
            entries.iter().map(|e| e.boxes.len()).sum::<usize>()
        );
        files.push(path);
        start += n as u64;
    }
    let annotations: [PathBuf; 3] = files
        .try_into()
        .map_err(|_| Error::Config("expected three splits".into()))?;
    Ok(DatasetFiles { annotations })
}
