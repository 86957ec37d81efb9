use std::collections::BTreeMap;

use super::matching::{iomin, prefer, MATCH_IOMIN};
use super::metrics::{image_metrics, object_metrics, ImageCounts, ImageMetrics, ObjectCounts, ObjectMetrics};
use crate::detector::Detection;
use crate::error::Result;
use crate::imaging::BoundingBox;

/// Ground truth and untresholded detections for one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredImage {
    pub ground_truth: Vec<BoundingBox>,
    pub detections: Vec<Detection>,
}

/// All metrics at one decision threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub object: ObjectMetrics,
    pub image: ImageMetrics,
    pub object_counts: ObjectCounts,
    pub image_counts: ImageCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// One point per distinct detection probability, thresholds decreasing.
    pub points: Vec<CurvePoint>,
    pub object_pr_auc: Option<f64>,
    pub log_avg_miss_rate: Option<f64>,
    pub image_pr_auc: Option<f64>,
    pub image_sens_spec_auc: Option<f64>,
}

impl EvalReport {
    /// Point with the highest object-level F2 (earliest on ties).
    pub fn best_object_f2(&self) -> Option<&CurvePoint> {
        best_by(&self.points, |p| p.object.f2)
    }

    pub fn best_image_f2(&self) -> Option<&CurvePoint> {
        best_by(&self.points, |p| p.image.f2)
    }

    /// The point whose threshold is the smallest one not below `t`, i.e.
    /// the operating point of a detector thresholded at `t`.
    pub fn at_threshold(&self, t: f64) -> Option<&CurvePoint> {
        self.points.iter().rev().find(|p| p.threshold >= t)
    }
}

fn best_by(points: &[CurvePoint], f: impl Fn(&CurvePoint) -> Option<f64>) -> Option<&CurvePoint> {
    let mut best: Option<(&CurvePoint, f64)> = None;
    for p in points {
        if let Some(v) = f(p) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((p, v));
            }
        }
    }
    best.map(|(p, _)| p)
}

/// Trapezoidal area under a curve given in path order with monotone `x`
/// (either direction). Following the path keeps points sharing an `x`
/// value in the right order.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum::<f64>()
        .abs()
}

/// FPPI values at which the miss rate is sampled.
pub fn log_fppi_samples() -> [f64; 9] {
    std::array::from_fn(|k| 10f64.powf(k as f64 / 8.0))
}

const MISS_RATE_FLOOR: f64 = 1e-10;

/// Geometric mean of the miss rate sampled at 9 log-spaced FPPI values in
/// [1, 10]. Each sample takes the point with the largest FPPI not above it;
/// samples below every point count as miss rate 1.
pub fn log_average_miss_rate(curve: &[(f64, f64)]) -> f64 {
    let samples = log_fppi_samples();
    let logs: f64 = samples
        .iter()
        .map(|&s| {
            let mut best: Option<(f64, f64)> = None;
            for &(fppi, mr) in curve {
                if fppi <= s && best.is_none_or(|(bf, bm)| fppi > bf || (fppi == bf && mr < bm)) {
                    best = Some((fppi, mr));
                }
            }
            best.map_or(1.0, |(_, mr)| mr).max(MISS_RATE_FLOOR).ln()
        })
        .sum();
    (logs / samples.len() as f64).exp()
}

/// Evaluates every distinct detection probability as a threshold.
///
/// Lowering the threshold only appends detections that are less probable
/// than all earlier ones, so matches made at a higher threshold persist and
/// only unmatched ground truth can pair with the new detections. The sweep
/// therefore matches incrementally instead of re-matching per threshold.
pub fn sweep(images: &[ScoredImage]) -> Result<EvalReport> {
    let mut order: Vec<(f64, usize, usize)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, im)| im.detections.iter().enumerate().map(move |(d, det)| (det.probability, i, d)))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut oc = ObjectCounts {
        moths: images.iter().map(|im| im.ground_truth.len()).sum(),
        images: images.len(),
        ..Default::default()
    };
    let mut ic = ImageCounts {
        moth_images: images.iter().filter(|im| !im.ground_truth.is_empty()).count(),
        ..Default::default()
    };
    ic.empty_images = images.len() - ic.moth_images;
    let point = |threshold: f64, oc: &ObjectCounts, ic: &ImageCounts| CurvePoint {
        threshold,
        object: object_metrics(oc),
        image: image_metrics(ic),
        object_counts: *oc,
        image_counts: *ic,
    };

    let mut gt_done: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.ground_truth.len()]).collect();
    let mut det_used: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.detections.len()]).collect();
    let mut proposed = vec![false; images.len()];
    let mut points = Vec::new();

    let mut start = 0;
    while start < order.len() {
        let p = order[start].0;
        let mut end = start;
        let mut fresh: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        while end < order.len() && order[end].0 == p {
            let (_, i, d) = order[end];
            fresh.entry(i).or_default().push(d);
            end += 1;
        }
        oc.detections += end - start;
        for (&i, new_dets) in &fresh {
            let im = &images[i];
            if !proposed[i] {
                proposed[i] = true;
                if im.ground_truth.is_empty() {
                    ic.false_proposals += 1;
                } else {
                    ic.true_proposals += 1;
                }
            }
            for (g, gb) in im.ground_truth.iter().enumerate() {
                if gt_done[i][g] {
                    continue;
                }
                let mut best: Option<usize> = None;
                for &d in new_dets {
                    let det = &im.detections[d];
                    if det_used[i][d] || iomin(gb, &det.bbox)? <= MATCH_IOMIN {
                        continue;
                    }
                    if best.is_none_or(|b| prefer(det, &im.detections[b])) {
                        best = Some(d);
                    }
                }
                if let Some(d) = best {
                    det_used[i][d] = true;
                    gt_done[i][g] = true;
                    oc.correct += 1;
                }
            }
        }
        points.push(point(p, &oc, &ic));
        start = end;
    }
    if points.is_empty() {
        points.push(point(1.0, &oc, &ic));
    }
    Ok(summarize(points))
}

fn summarize(points: Vec<CurvePoint>) -> EvalReport {
    let first = &points[0];
    let object_pr_auc = first.object.recall.map(|_| {
        let mut pr = vec![(0.0, first.object.precision)];
        pr.extend(points.iter().filter_map(|p| Some((p.object.recall?, p.object.precision))));
        trapezoid_auc(&pr)
    });
    let log_avg_miss_rate = first.object.miss_rate.map(|_| {
        let curve: Vec<(f64, f64)> = points
            .iter()
            .filter_map(|p| Some((p.object.fppi, p.object.miss_rate?)))
            .collect();
        log_average_miss_rate(&curve)
    });
    let image_pr_auc = first.image.sensitivity.map(|_| {
        let mut pr = vec![(0.0, first.image.precision)];
        pr.extend(points.iter().filter_map(|p| Some((p.image.sensitivity?, p.image.precision))));
        trapezoid_auc(&pr)
    });
    let image_sens_spec_auc = match (first.image.sensitivity, first.image.specificity) {
        (Some(_), Some(_)) => {
            let mut ss = vec![(1.0, 0.0)];
            ss.extend(
                points
                    .iter()
                    .filter_map(|p| Some((p.image.specificity?, p.image.sensitivity?))),
            );
            Some(trapezoid_auc(&ss))
        }
        _ => None,
    };
    EvalReport {
        points,
        object_pr_auc,
        log_avg_miss_rate,
        image_pr_auc,
        image_sens_spec_auc,
    }
}
