//! End-to-end orchestration: run settings, two-stage training with
//! bootstrapping, dataset-wide detection and evaluation, and the
//! synthesize-train-evaluate `repro` chain.

mod run;
mod settings;
mod training;

pub use run::{detect_all, evaluate_detector, load_corrected, repro, scored, ReproOutputs, ReproResult};
pub use settings::{ModelKind, Settings, Standardization};
pub use training::{
    correct_images, extract_patches, history_csv, initial_network, train_detector, train_from_plan,
    write_history, PatchPlan, StageCounts, StageStats, TrainedDetector, HISTORY_HEADER,
};
