use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::settings::{ModelKind, Settings, Standardization};
use crate::dataset::{
    bootstrap_negatives, extract_positive_patches, mine_negative_patches, scaled_cap,
    subsample_indices, AnnotatedImage, MiningConfig, PatchSet,
};
use crate::error::{Error, Result};
use crate::imaging::{grey_world_correct, CHANNELS};
use crate::nncore::{train, EpochStats, Network, PatchSource, Standardizer};

/// Upper bound on patches used to fit per-dimension statistics.
const STANDARDIZER_SAMPLES: usize = 20_000;

/// Grey-world corrects every image in place.
pub fn correct_images(images: &mut [AnnotatedImage]) {
    images
        .par_iter_mut()
        .for_each(|a| a.image = grey_world_correct(&a.image));
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub stage: usize,
    pub stats: EpochStats,
}

/// Patch counts of one training stage, before augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub train_positives: usize,
    pub train_negatives: usize,
    pub val_positives: usize,
    pub val_negatives: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub net: Network<f64>,
    pub history: Vec<StageStats>,
    pub stages: Vec<StageCounts>,
    /// Training image indices actually used.
    pub train_images: Vec<usize>,
}

/// Base (unaugmented) patches and their provenance.
#[derive(Debug, Clone, Default)]
pub struct PatchPlan {
    pub train: PatchSet,
    pub val: PatchSet,
    pub train_images: Vec<usize>,
}

fn moth_free(images: &[AnnotatedImage], idx: &[usize]) -> Vec<usize> {
    idx.iter().copied().filter(|&i| !images[i].has_moth()).collect()
}

/// Positive patches from every box plus edge-mined negatives, for the
/// training subset and the validation images.
pub fn extract_patches(train_imgs: &[AnnotatedImage], val_imgs: &[AnnotatedImage], s: &Settings) -> Result<PatchPlan> {
    let flags: Vec<bool> = train_imgs.iter().map(AnnotatedImage::has_moth).collect();
    let train_idx = if s.train_fraction < 1.0 {
        subsample_indices(&flags, s.train_fraction, s.seed)?
    } else {
        (0..train_imgs.len()).collect()
    };
    let val_idx: Vec<usize> = (0..val_imgs.len()).collect();
    let mining = |seed: u64| MiningConfig {
        canny_low: s.canny_low,
        canny_high: s.canny_high,
        seed,
    };
    let mut sets = Vec::new();
    for (name, imgs, idx, seed) in [
        ("training", train_imgs, &train_idx, s.seed),
        ("validation", val_imgs, &val_idx, s.seed.wrapping_add(1)),
    ] {
        let mut set = extract_positive_patches(imgs, idx, s.patch_size)?;
        if set.is_empty() {
            return Err(Error::Config(format!("no moth boxes in the {name} images")));
        }
        let free = moth_free(imgs, idx);
        if free.is_empty() {
            return Err(Error::Config(format!("no moth-free {name} images to mine negatives from")));
        }
        let target = (set.len() as f64 * s.negatives_per_positive).round() as usize;
        set.extend(mine_negative_patches(imgs, &free, s.patch_size, target, &mining(seed))?);
        sets.push(set);
    }
    let val = sets.pop().unwrap_or_default();
    let train = sets.pop().unwrap_or_default();
    Ok(PatchPlan {
        train,
        val,
        train_images: train_idx,
    })
}

fn counts(train: &PatchSet, val: &PatchSet) -> StageCounts {
    use crate::dataset::Label::{Background, Moth};
    StageCounts {
        train_positives: train.count(Moth),
        train_negatives: train.count(Background),
        val_positives: val.count(Moth),
        val_negatives: val.count(Background),
    }
}

fn fit_standardizer<S: PatchSource<f64>>(source: &S, dim: usize, s: &Settings) -> Result<Standardizer<f64>> {
    match s.standardization {
        Standardization::None => Ok(Standardizer::Identity),
        Standardization::PerPatch => Ok(Standardizer::PerPatch),
        Standardization::PerDimension => {
            let n = source.len();
            let picks: Vec<usize> = if n <= STANDARDIZER_SAMPLES {
                (0..n).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x5354_4430);
                let mut v = sample(&mut rng, n, STANDARDIZER_SAMPLES).into_vec();
                v.sort_unstable();
                v
            };
            let samples: Vec<Vec<f64>> = picks
                .par_iter()
                .map(|&i| {
                    let mut buf = vec![0.0; dim];
                    source.fill(i, &mut buf);
                    buf
                })
                .collect();
            Standardizer::fit_per_dimension(dim, &samples)
        }
    }
}

/// Initial network for the configured model kind.
pub fn initial_network(s: &Settings) -> Result<Network<f64>> {
    match s.model {
        ModelKind::ConvNet => Network::convnet(s.patch_size, CHANNELS, &s.architecture, s.seed),
        ModelKind::LogReg => Network::logistic_regression(s.patch_size, CHANNELS),
    }
}

/// Two-stage training: edge-mined negatives first, then hard negatives from
/// the first model's false positives. Images must be colour-corrected.
pub fn train_detector(train_imgs: &[AnnotatedImage], val_imgs: &[AnnotatedImage], s: &Settings) -> Result<TrainedDetector> {
    s.validate()?;
    let plan = extract_patches(train_imgs, val_imgs, s)?;
    train_from_plan(train_imgs, val_imgs, plan, s)
}

pub fn train_from_plan(
    train_imgs: &[AnnotatedImage],
    val_imgs: &[AnnotatedImage],
    plan: PatchPlan,
    s: &Settings,
) -> Result<TrainedDetector> {
    let PatchPlan {
        train: base_train,
        val: mut val_set,
        train_images,
    } = plan;
    let mut train_set = base_train.augmented(s.augmentation);
    let mut stages = vec![counts(&base_train, &val_set)];
    log::info!("stage 1 patches: {:?}, {} after augmentation", stages[0], train_set.len());

    let mut net = initial_network(s)?;
    let dim = net.input_len();
    let standardizer = fit_standardizer(&train_set.view(train_imgs)?, dim, s)?;
    net.set_standardizer(standardizer)?;

    let mut history = Vec::new();
    let outcome = train(
        net,
        &train_set.view(train_imgs)?,
        &val_set.view(val_imgs)?,
        &s.train_config(s.seed, s.epochs),
    )?;
    history.extend(outcome.history.into_iter().map(|stats| StageStats { stage: 1, stats }));
    let mut net = outcome.model;

    let det_cfg = s.detector_config();
    let val_idx: Vec<usize> = (0..val_imgs.len()).collect();
    let mut base = base_train;
    for round in 1..=s.bootstrap_rounds {
        let (hard_t, rep_t) = bootstrap_negatives(&net, train_imgs, &train_images, &det_cfg, s.bootstrap_cap)?;
        let val_cap = scaled_cap(s.bootstrap_cap, val_idx.len(), train_images.len());
        let (hard_v, rep_v) = bootstrap_negatives(&net, val_imgs, &val_idx, &det_cfg, val_cap)?;
        log::info!(
            "bootstrap round {round}: {} of {} training and {} of {} validation false positives",
            rep_t.returned,
            rep_t.false_positives,
            rep_v.returned,
            rep_v.false_positives
        );
        train_set.extend(hard_t.augmented(s.augmentation));
        base.extend(hard_t);
        val_set.extend(hard_v);
        stages.push(counts(&base, &val_set));
        let outcome = train(
            net,
            &train_set.view(train_imgs)?,
            &val_set.view(val_imgs)?,
            &s.train_config(s.seed.wrapping_add(round as u64), s.stage2_epochs),
        )?;
        history.extend(outcome.history.into_iter().map(|stats| StageStats {
            stage: round + 1,
            stats,
        }));
        net = outcome.model;
    }
    Ok(TrainedDetector {
        net,
        history,
        stages,
        train_images,
    })
}

pub const HISTORY_HEADER: &str = "stage,epoch,train_loss,train_accuracy,val_loss,val_accuracy";

pub fn history_csv(history: &[StageStats]) -> String {
    let mut s = format!("{HISTORY_HEADER}\n");
    for h in history {
        let e = &h.stats;
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            h.stage, e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
        );
    }
    s
}

pub fn write_history(path: &Path, history: &[StageStats]) -> Result<()> {
    Ok(std::fs::write(path, history_csv(history))?)
}
