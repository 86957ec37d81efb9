use std::fmt;
use std::str::FromStr;

use crate::dataset::AugmentMode;
use crate::detector::{DetectorConfig, Overlap};
use crate::error::{Error, Result};
use crate::nncore::{Architecture, TrainConfig};
use crate::synthgen::SceneConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    #[default]
    ConvNet,
    LogReg,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convnet" => Ok(Self::ConvNet),
            "logreg" => Ok(Self::LogReg),
            _ => Err(Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ConvNet => "convnet",
            Self::LogReg => "logreg",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Standardization {
    #[default]
    PerDimension,
    PerPatch,
    None,
}

impl FromStr for Standardization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-dimension" => Ok(Self::PerDimension),
            "per-patch" => Ok(Self::PerPatch),
            "none" => Ok(Self::None),
            _ => Err(Error::Config(format!("unknown standardization {s:?}"))),
        }
    }
}

impl fmt::Display for Standardization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerDimension => "per-dimension",
            Self::PerPatch => "per-patch",
            Self::None => "none",
        })
    }
}

/// Every tunable of a run. Serialized as flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub patch_size: usize,
    pub model: ModelKind,
    pub architecture: Architecture,
    pub augmentation: AugmentMode,
    pub bootstrap_rounds: usize,
    pub bootstrap_cap: usize,
    pub train_fraction: f64,
    pub negatives_per_positive: f64,
    pub standardization: Standardization,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub epochs: usize,
    pub stage2_epochs: usize,
    /// Samples drawn per epoch; 0 means a full pass.
    pub epoch_samples: usize,
    pub canny_low: f64,
    pub canny_high: f64,
    /// Scan stride; 0 means `patch_size / 4`.
    pub stride: usize,
    pub nms_overlap: f64,
    pub overlap: Overlap,
    pub threshold: f64,
    pub scene: SceneConfig,
    pub split_counts: [usize; 3],
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 42,
            patch_size: 21,
            model: ModelKind::ConvNet,
            architecture: Architecture::default(),
            augmentation: AugmentMode::Both,
            bootstrap_rounds: 1,
            bootstrap_cap: 6000,
            train_fraction: 1.0,
            negatives_per_positive: 1.0,
            standardization: Standardization::PerDimension,
            learning_rate: 0.002,
            batch_size: 256,
            momentum: 0.9,
            epochs: 100,
            stage2_epochs: 100,
            epoch_samples: 0,
            canny_low: crate::imaging::DEFAULT_LOW,
            canny_high: crate::imaging::DEFAULT_HIGH,
            stride: 0,
            nms_overlap: 0.10,
            overlap: Overlap::IoMin,
            threshold: 0.5,
            scene: SceneConfig::default(),
            split_counts: crate::synthgen::DEFAULT_COUNTS,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64)> {
    let (a, b) = value
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("{key} expects lo:hi, got {value:?}")))?;
    Ok((parse(key, a.trim())?, parse(key, b.trim())?))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

/// Conv stages as `maps x kernel` items, e.g. `16x5,32x5`.
fn parse_conv(key: &str, value: &str) -> Result<Vec<(usize, usize)>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let (m, k) = item
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("{key} item {item:?} is not MAPSxKERNEL")))?;
            Ok((parse(key, m)?, parse(key, k)?))
        })
        .collect()
}

fn join<T: fmt::Display>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Sets one key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let sc = &mut self.scene;
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                sc.seed = self.seed;
            }
            "patch_size" => self.patch_size = parse(key, v)?,
            "model" => self.model = parse(key, v)?,
            "conv" => self.architecture.conv = parse_conv(key, v)?,
            "hidden" => self.architecture.hidden = parse_list(key, v)?,
            "aug" => self.augmentation = parse(key, v)?,
            "bootstrap" => self.bootstrap_rounds = parse(key, v)?,
            "bootstrap_cap" => self.bootstrap_cap = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "negatives_per_positive" => self.negatives_per_positive = parse(key, v)?,
            "standardize" => self.standardization = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "stage2_epochs" => self.stage2_epochs = parse(key, v)?,
            "epoch_samples" => self.epoch_samples = parse(key, v)?,
            "canny_low" => self.canny_low = parse(key, v)?,
            "canny_high" => self.canny_high = parse(key, v)?,
            "stride" => self.stride = parse(key, v)?,
            "nms_overlap" => self.nms_overlap = parse(key, v)?,
            "overlap" => self.overlap = parse(key, v)?,
            "threshold" => self.threshold = parse(key, v)?,
            "train_images" => self.split_counts[0] = parse(key, v)?,
            "val_images" => self.split_counts[1] = parse(key, v)?,
            "test_images" => self.split_counts[2] = parse(key, v)?,
            "scene_width" => sc.width = parse(key, v)?,
            "scene_height" => sc.height = parse(key, v)?,
            "mean_moths" => sc.mean_moths = parse(key, v)?,
            "no_moth_fraction" => sc.no_moth_fraction = parse(key, v)?,
            "body_length" => sc.body_length = parse_range(key, v)?,
            "body_width" => sc.body_width = parse_range(key, v)?,
            "wing_probability" => sc.wing_probability = parse(key, v)?,
            "mean_flies" => sc.mean_flies = parse(key, v)?,
            "mean_leaves" => sc.mean_leaves = parse(key, v)?,
            "mean_beetles" => sc.mean_beetles = parse(key, v)?,
            "mean_debris" => sc.mean_debris = parse(key, v)?,
            "mean_smudges" => sc.mean_smudges = parse(key, v)?,
            "lure_probability" => sc.lure_probability = parse(key, v)?,
            "lure_radius" => sc.lure_radius = parse_range(key, v)?,
            "liner_level" => sc.liner_level = parse(key, v)?,
            "texture_amplitude" => sc.texture_amplitude = parse(key, v)?,
            "specks" => sc.specks = parse(key, v)?,
            "tint_red" => sc.tint[0] = parse_range(key, v)?,
            "tint_green" => sc.tint[1] = parse_range(key, v)?,
            "tint_blue" => sc.tint[2] = parse_range(key, v)?,
            "blur_sigma" => sc.blur_sigma = parse_range(key, v)?,
            "noise_amplitude" => sc.noise_amplitude = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// All keys with their resolved values, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let sc = &self.scene;
        let r = |(a, b): (f64, f64)| format!("{a}:{b}");
        vec![
            ("seed", self.seed.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("model", self.model.to_string()),
            ("conv", join(self.architecture.conv.iter().map(|(m, k)| format!("{m}x{k}")))),
            ("hidden", join(&self.architecture.hidden)),
            ("aug", self.augmentation.to_string()),
            ("bootstrap", self.bootstrap_rounds.to_string()),
            ("bootstrap_cap", self.bootstrap_cap.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("negatives_per_positive", self.negatives_per_positive.to_string()),
            ("standardize", self.standardization.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("momentum", self.momentum.to_string()),
            ("epochs", self.epochs.to_string()),
            ("stage2_epochs", self.stage2_epochs.to_string()),
            ("epoch_samples", self.epoch_samples.to_string()),
            ("canny_low", self.canny_low.to_string()),
            ("canny_high", self.canny_high.to_string()),
            ("stride", self.stride.to_string()),
            ("nms_overlap", self.nms_overlap.to_string()),
            (
                "overlap",
                match self.overlap {
                    Overlap::IoMin => "iomin".into(),
                    Overlap::IoU => "iou".into(),
                },
            ),
            ("threshold", self.threshold.to_string()),
            ("train_images", self.split_counts[0].to_string()),
            ("val_images", self.split_counts[1].to_string()),
            ("test_images", self.split_counts[2].to_string()),
            ("scene_width", sc.width.to_string()),
            ("scene_height", sc.height.to_string()),
            ("mean_moths", sc.mean_moths.to_string()),
            ("no_moth_fraction", sc.no_moth_fraction.to_string()),
            ("body_length", r(sc.body_length)),
            ("body_width", r(sc.body_width)),
            ("wing_probability", sc.wing_probability.to_string()),
            ("mean_flies", sc.mean_flies.to_string()),
            ("mean_leaves", sc.mean_leaves.to_string()),
            ("mean_beetles", sc.mean_beetles.to_string()),
            ("mean_debris", sc.mean_debris.to_string()),
            ("mean_smudges", sc.mean_smudges.to_string()),
            ("lure_probability", sc.lure_probability.to_string()),
            ("lure_radius", r(sc.lure_radius)),
            ("liner_level", sc.liner_level.to_string()),
            ("texture_amplitude", sc.texture_amplitude.to_string()),
            ("specks", sc.specks.to_string()),
            ("tint_red", r(sc.tint[0])),
            ("tint_green", r(sc.tint[1])),
            ("tint_blue", r(sc.tint[2])),
            ("blur_sigma", r(sc.blur_sigma)),
            ("noise_amplitude", sc.noise_amplitude.to_string()),
        ]
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let mut s = Self::default();
        s.apply_config(text)?;
        Ok(s)
    }

    /// The resolved configuration as a config file.
    pub fn to_config(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let mut d = DetectorConfig::new(self.patch_size);
        if self.stride > 0 {
            d.stride = self.stride;
        }
        d.nms_overlap = self.nms_overlap;
        d.overlap = self.overlap;
        d.threshold = self.threshold;
        d
    }

    pub fn train_config(&self, seed: u64, epochs: usize) -> TrainConfig<f64> {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            momentum: self.momentum,
            max_epochs: epochs,
            seed,
            epoch_samples: (self.epoch_samples > 0).then_some(self.epoch_samples),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 2 {
            return Err(Error::Config(format!("patch size {} too small", self.patch_size)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1]", self.train_fraction)));
        }
        if !(self.negatives_per_positive > 0.0 && self.negatives_per_positive.is_finite()) {
            return Err(Error::Config("negatives per positive must be positive".into()));
        }
        self.detector_config().validate()?;
        self.train_config(self.seed, self.epochs).validate()?;
        self.scene.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip() {
        let mut s = Settings::default();
        s.set("conv", "8x5, 16x3").unwrap();
        s.set("hidden", "64").unwrap();
        s.set("tint_red", "0.5:0.9").unwrap();
        s.set("model", "logreg").unwrap();
        s.set("aug", "rot").unwrap();
        s.set("overlap", "iou").unwrap();
        let text = s.to_config();
        assert_eq!(Settings::from_config(&text).unwrap(), s);
        assert_eq!(s.architecture.conv, vec![(8, 5), (16, 3)]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(Settings::from_config("colour = red\n").is_err());
        assert!(Settings::from_config("epochs = many\n").is_err());
        assert!(Settings::from_config("epochs 5\n").is_err());
        let s = Settings::from_config("# comment\n\nepochs = 5 # trailing\nseed=7\n").unwrap();
        assert_eq!((s.epochs, s.seed, s.scene.seed), (5, 7, 7));
    }

    #[test]
    fn derived_configs() {
        let s = Settings::default();
        s.validate().unwrap();
        assert_eq!(s.detector_config().stride, 5);
        assert_eq!(s.train_config(1, 3).epoch_samples, None);
        let bad = Settings {
            train_fraction: 0.0,
            ..Settings::default()
        };
        assert!(bad.validate().is_err());
    }
}
