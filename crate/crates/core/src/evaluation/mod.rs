//! Detection evaluation: IOMin matching against ground truth, object- and
//! image-level metrics, threshold sweeps and their scalar summaries.

mod matching;
mod metrics;
pub mod report;
mod sweep;

pub use matching::{iomin, iou, match_detections, MatchResult, MATCH_IOMIN};
pub use metrics::{
    f2, fbeta, image_metrics, object_metrics, ImageCounts, ImageMetrics, ObjectCounts,
    ObjectMetrics,
};
pub use sweep::{
    log_average_miss_rate, log_fppi_samples, sweep, trapezoid_auc, CurvePoint, EvalReport,
    ScoredImage,
};
