use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::imaging::BoundingBox;

/// A detection counts as a hit on a ground-truth box above this IOMin.
pub const MATCH_IOMIN: f64 = 0.5;

/// Intersection area over the smaller box area.
pub fn iomin(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::Metric(format!("zero-area box in iomin: {a:?}, {b:?}")));
    }
    Ok(a.intersection_area(b) as f64 / a.area().min(b.area()) as f64)
}

/// Intersection over union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    if !a.is_valid() || !b.is_valid() {
        return Err(Error::Metric(format!("zero-area box in iou: {a:?}, {b:?}")));
    }
    let i = a.intersection_area(b);
    Ok(i as f64 / (a.area() + b.area() - i) as f64)
}

/// Outcome of matching one image's detections to its ground truth. Entries
/// are indices into the ground-truth and detection lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchResult {
    /// `(ground truth, detection)` pairs in ground-truth order.
    pub matched: Vec<(usize, usize)>,
    pub missed: Vec<usize>,
    pub false_positives: Vec<usize>,
}

/// Canonical preference between two candidate detections: higher
/// probability, then smaller y, then smaller x.
pub(crate) fn prefer(a: &Detection, b: &Detection) -> bool {
    (a.probability, -a.bbox.y, -a.bbox.x) > (b.probability, -b.bbox.y, -b.bbox.x)
}

/// Greedy matching in ground-truth order; each ground-truth box takes the
/// most probable still-unmatched detection with IOMin above 0.5.
pub fn match_detections(gt: &[BoundingBox], dets: &[Detection]) -> Result<MatchResult> {
    let mut used = vec![false; dets.len()];
    let mut out = MatchResult::default();
    for (g, gb) in gt.iter().enumerate() {
        let mut best: Option<usize> = None;
        for (d, det) in dets.iter().enumerate() {
            if used[d] || iomin(gb, &det.bbox)? <= MATCH_IOMIN {
                continue;
            }
            if best.is_none_or(|b| prefer(det, &dets[b])) {
                best = Some(d);
            }
        }
        match best {
            Some(d) => {
                used[d] = true;
                out.matched.push((g, d));
            }
            None => out.missed.push(g),
        }
    }
    out.false_positives = (0..dets.len()).filter(|&d| !used[d]).collect();
    Ok(out)
}
