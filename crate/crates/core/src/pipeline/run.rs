use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::settings::Settings;
use super::training::{correct_images, train_detector, write_history, TrainedDetector};
use crate::dataset::{load_dataset, AnnotatedImage};
use crate::detector::{scan_and_suppress, write_detections, Detection, DetectorConfig};
use crate::error::Result;
use crate::evaluation::report::{write_curves, write_summary, write_svg, Level};
use crate::evaluation::{sweep, EvalReport, ScoredImage};
use crate::nncore::{checkpoint, Network};
use crate::synthgen::generate_dataset;

/// Loads an annotation file and grey-world corrects its images.
pub fn load_corrected(annotations: &Path) -> Result<Vec<AnnotatedImage>> {
    let mut images = load_dataset(annotations)?;
    correct_images(&mut images);
    Ok(images)
}

/// Post-suppression, unthresholded detections for colour-corrected images.
/// Images are processed one after another; each scan is parallel inside.
pub fn detect_all(net: &Network<f64>, images: &[AnnotatedImage], cfg: &DetectorConfig) -> Result<Vec<Vec<Detection>>> {
    images.iter().map(|a| scan_and_suppress(&a.image, net, cfg)).collect()
}

pub fn scored(images: &[AnnotatedImage], dets: &[Vec<Detection>]) -> Vec<ScoredImage> {
    images
        .par_iter()
        .zip(dets)
        .map(|(a, d)| ScoredImage {
            ground_truth: a.boxes.clone(),
            detections: d.clone(),
        })
        .collect()
}

/// Detects on every image and sweeps all thresholds.
pub fn evaluate_detector(
    net: &Network<f64>,
    images: &[AnnotatedImage],
    cfg: &DetectorConfig,
) -> Result<(Vec<Vec<Detection>>, EvalReport)> {
    let dets = detect_all(net, images, cfg)?;
    let report = sweep(&scored(images, &dets))?;
    Ok((dets, report))
}

/// Files written by [`repro`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReproOutputs {
    pub manifest: PathBuf,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub detections: PathBuf,
    pub curves: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ReproResult {
    pub outputs: ReproOutputs,
    pub detector: TrainedDetector,
    pub report: EvalReport,
}

/// Synthesizes the dataset, trains, detects on the test split and writes
/// the evaluation, all under `out`.
pub fn repro(settings: &Settings, out: &Path) -> Result<ReproResult> {
    settings.validate()?;
    fs::create_dir_all(out)?;
    let manifest = out.join("manifest.conf");
    fs::write(&manifest, settings.to_config())?;
    let files = generate_dataset(&settings.scene, settings.split_counts, &out.join("data"))?;
    let [train_imgs, val_imgs, test_imgs] = files.annotations.each_ref().map(|p| load_corrected(p));
    let (train_imgs, val_imgs, test_imgs) = (train_imgs?, val_imgs?, test_imgs?);

    let detector = train_detector(&train_imgs, &val_imgs, settings)?;
    let checkpoint_path = out.join("model.ckpt");
    checkpoint::save(&detector.net, &checkpoint_path)?;
    let history = out.join("history.csv");
    write_history(&history, &detector.history)?;

    let (dets, report) = evaluate_detector(&detector.net, &test_imgs, &settings.detector_config())?;
    let detections = out.join("detections.csv");
    write_detections(&detections, test_imgs.iter().map(|a| a.path.as_str()).zip(dets.iter().map(Vec::as_slice)))?;
    let curves = out.join("curves.csv");
    write_curves(&curves, &report, Level::Both)?;
    let summary = out.join("summary.csv");
    write_summary(&summary, &report, Level::Both)?;
    let plot = out.join("curves.svg");
    write_svg(&plot, &[(&settings.model.to_string(), &report)], Level::Both)?;
    Ok(ReproResult {
        outputs: ReproOutputs {
            manifest,
            checkpoint: checkpoint_path,
            history,
            detections,
            curves,
            summary,
            plot,
        },
        detector,
        report,
    })
}
