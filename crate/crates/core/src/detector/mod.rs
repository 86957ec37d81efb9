//! Sliding-window detection: scan every window with the classifier, suppress
//! overlapping windows greedily, then apply the decision threshold.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{iomin, iou};
use crate::imaging::io::{draw_box, GREEN, MAGENTA};
use crate::imaging::{grey_world_correct, write_window_input, BoundingBox, Image, Point, CHANNELS};
use crate::nncore::{Network, MOTH_CLASS};
use crate::scalar::Scalar;

/// A scored square window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub probability: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, probability: f64) -> Self {
        Self { bbox, probability }
    }

    /// Extraction centre that reproduces this window exactly.
    pub fn center(&self) -> Point {
        Point::new(self.bbox.x + self.bbox.w / 2, self.bbox.y + self.bbox.h / 2)
    }
}

/// Overlap measure used by non-maximum suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overlap {
    #[default]
    IoMin,
    IoU,
}

impl Overlap {
    pub fn measure(self, a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
        match self {
            Self::IoMin => iomin(a, b),
            Self::IoU => iou(a, b),
        }
    }
}

impl FromStr for Overlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iomin" => Ok(Self::IoMin),
            "iou" => Ok(Self::IoU),
            _ => Err(Error::Config(format!("unknown overlap measure {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub side: usize,
    pub stride: usize,
    pub nms_overlap: f64,
    pub overlap: Overlap,
    pub threshold: f64,
}

impl DetectorConfig {
    /// Stride `side / 4`, NMS at IOMin 0.10, threshold 0.5.
    pub fn new(side: usize) -> Self {
        Self {
            side,
            stride: (side / 4).max(1),
            nms_overlap: 0.10,
            overlap: Overlap::IoMin,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.stride == 0 || self.stride > self.side {
            return Err(Error::Config(format!(
                "stride {} must lie in [1, side {}]",
                self.stride, self.side
            )));
        }
        for (name, v) in [("nms overlap", self.nms_overlap), ("threshold", self.threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Number of scanned windows along an extent.
pub fn positions(extent: u32, side: usize, stride: usize) -> usize {
    (extent as usize - side) / stride + 1
}

/// Scores every window on the `stride` grid, in row-major order.
pub fn sliding_window_scan<T: Scalar>(img: &Image, net: &Network<T>, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let side = cfg.side;
    if net.input_side() != side || net.channels() != CHANNELS {
        return Err(Error::Detection(format!(
            "model takes {0}x{0}x{1} inputs but the detector uses side {side}",
            net.input_side(),
            net.channels()
        )));
    }
    let (w, h) = img.dimensions();
    if (w as usize) < side || (h as usize) < side {
        return Err(Error::Detection(format!(
            "{w}x{h} image is smaller than the {side}x{side} window"
        )));
    }
    let nx = positions(w, side, cfg.stride);
    let ny = positions(h, side, cfg.stride);
    let rows: Vec<Vec<Detection>> = (0..ny)
        .into_par_iter()
        .map_init(
            || (net.workspace(), vec![T::zero(); net.input_len()]),
            |(ws, input), j| {
                let y0 = (j * cfg.stride) as u32;
                (0..nx)
                    .map(|i| {
                        let x0 = (i * cfg.stride) as u32;
                        write_window_input(img, x0, y0, side, input);
                        let p = net.forward(input, ws)?[MOTH_CLASS].to_f64_lossy();
                        if !p.is_finite() {
                            return Err(Error::Detection(format!("non-finite score at ({x0}, {y0})")));
                        }
                        Ok(Detection::new(
                            BoundingBox::square(i64::from(x0), i64::from(y0), side as i64),
                            p,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            },
        )
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Orders detections by probability descending, then y, then x.
pub fn sort_canonical(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then(a.bbox.y.cmp(&b.bbox.y))
            .then(a.bbox.x.cmp(&b.bbox.x))
            .then(a.bbox.w.cmp(&b.bbox.w))
            .then(a.bbox.h.cmp(&b.bbox.h))
    });
}

/// Greedy suppression of detections overlapping a more probable survivor by
/// at least `threshold`.
pub fn nms(dets: &[Detection], threshold: f64) -> Result<Vec<Detection>> {
    nms_with(dets, threshold, Overlap::IoMin)
}

pub fn nms_with(dets: &[Detection], threshold: f64, overlap: Overlap) -> Result<Vec<Detection>> {
    if let Some(d) = dets.iter().find(|d| !d.probability.is_finite()) {
        return Err(Error::Detection(format!("non-finite probability in {d:?}")));
    }
    let mut sorted = dets.to_vec();
    sort_canonical(&mut sorted);
    let mut keep: Vec<Detection> = Vec::new();
    'next: for d in sorted {
        for k in &keep {
            if overlap.measure(&k.bbox, &d.bbox)? >= threshold {
                continue 'next;
            }
        }
        keep.push(d);
    }
    Ok(keep)
}

/// Keeps detections with probability at least `t`, preserving order.
pub fn threshold_detections(dets: &[Detection], t: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
    }
    Ok(dets.iter().filter(|d| d.probability >= t).copied().collect())
}

/// Scan and suppression on an already colour-corrected image, without the
/// decision threshold.
pub fn scan_and_suppress<T: Scalar>(corrected: &Image, net: &Network<T>, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let raw = sliding_window_scan(corrected, net, cfg)?;
    nms_with(&raw, cfg.nms_overlap, cfg.overlap)
}

/// Full pipeline: grey-world correction, scan, suppression, threshold.
/// Output is sorted by probability descending.
pub fn detect<T: Scalar>(img: &Image, net: &Network<T>, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let corrected = grey_world_correct(img);
    threshold_detections(&scan_and_suppress(&corrected, net, cfg)?, cfg.threshold)
}

pub const DETECTION_HEADER: &str = "image_path,x,y,side,probability";

/// Detection file body for several images, rows in the given order.
pub fn detections_csv<'a>(items: impl IntoIterator<Item = (&'a str, &'a [Detection])>) -> String {
    let mut s = format!("{DETECTION_HEADER}\n");
    for (path, dets) in items {
        for d in dets {
            let _ = writeln!(s, "{path},{},{},{},{:.6}", d.bbox.x, d.bbox.y, d.bbox.w, d.probability);
        }
    }
    s
}

pub fn write_detections<'a>(path: &Path, items: impl IntoIterator<Item = (&'a str, &'a [Detection])>) -> Result<()> {
    Ok(fs::write(path, detections_csv(items))?)
}

/// Reads a detection file into `(image_path, detection)` rows.
pub fn read_detections(path: &Path) -> Result<Vec<(String, Detection)>> {
    let bad = |msg: String| Error::Format {
        kind: "detection",
        path: path.to_path_buf(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != DETECTION_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 2;
        if rec.len() != 5 {
            return Err(bad(format!("row {row} has {} fields", rec.len())));
        }
        let int = |k: usize| rec[k].parse::<i64>().map_err(|e| bad(format!("row {row}: {e}")));
        let p: f64 = rec[4].parse().map_err(|e| bad(format!("row {row}: {e}")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("row {row}: probability {p} outside [0, 1]")));
        }
        out.push((rec[0].to_owned(), Detection::new(BoundingBox::square(int(1)?, int(2)?, int(3)?), p)));
    }
    Ok(out)
}

/// Copy of `img` with ground truth in green and detections in magenta.
pub fn overlay(img: &Image, ground_truth: &[BoundingBox], dets: &[Detection]) -> Image {
    let mut out = img.clone();
    for b in ground_truth {
        draw_box(&mut out, b, GREEN);
    }
    for d in dets {
        draw_box(&mut out, &d.bbox, MAGENTA);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, FcLayer, Layer, Network, Standardizer};
    use image::Rgb;
    use proptest::prelude::*;

    fn det(x: i64, y: i64, side: i64, p: f64) -> Detection {
        Detection::new(BoundingBox::square(x, y, side), p)
    }

    /// Scores a window by its mean red intensity.
    fn red_net(side: usize) -> Network<f64> {
        let n = side * side * CHANNELS;
        let mut w = vec![0.0; 2 * n];
        for k in 0..side * side {
            w[n + k] = 1.0 / (side * side) as f64 / 8.0;
        }
        let fc = FcLayer {
            outputs: 2,
            inputs: n,
            weights: w,
            biases: vec![0.0, -16.0],
            activation: Activation::Softmax,
        };
        Network::from_layers(side, CHANNELS, vec![Layer::Fc(fc)], Standardizer::Identity).unwrap()
    }

    #[test]
    fn window_grid_counts() {
        let cfg = DetectorConfig::new(21);
        assert_eq!(cfg.stride, 5);
        assert_eq!(positions(640, 21, 5) * positions(480, 21, 5), 11408);
        let net = red_net(5);
        let img = Image::new(5, 5);
        assert_eq!(sliding_window_scan(&img, &net, &DetectorConfig::new(5)).unwrap().len(), 1);
        let tiling = DetectorConfig {
            stride: 5,
            ..DetectorConfig::new(5)
        };
        assert_eq!(sliding_window_scan(&Image::new(20, 15), &net, &tiling).unwrap().len(), 12);
        assert!(sliding_window_scan(&Image::new(4, 20), &net, &tiling).is_err());
        assert!(sliding_window_scan(&Image::new(20, 20), &red_net(7), &tiling).is_err());
    }

    #[test]
    fn scan_scores_bright_region() {
        let net = red_net(4);
        let mut img = Image::from_pixel(16, 16, Rgb([0, 0, 0]));
        for y in 8..12 {
            for x in 4..8 {
                img.put_pixel(x, y, Rgb([255, 0, 0]));
            }
        }
        let dets = sliding_window_scan(&img, &net, &DetectorConfig::new(4)).unwrap();
        assert_eq!(dets.len(), 13 * 13);
        let best = dets.iter().max_by(|a, b| a.probability.total_cmp(&b.probability)).unwrap();
        assert_eq!((best.bbox.x, best.bbox.y), (4, 8));
        assert_eq!(best.center(), Point::new(6, 10));
    }

    #[test]
    fn nms_examples() {
        let out = nms(&[det(0, 0, 10, 0.8), det(0, 0, 10, 0.9)], 0.1).unwrap();
        assert_eq!(out, vec![det(0, 0, 10, 0.9)]);
        // IOMin 0.05 < 0.10
        let a = Detection::new(BoundingBox::new(0, 0, 10, 10), 0.9);
        let b = Detection::new(BoundingBox::new(0, 9, 10, 5), 0.8);
        assert_eq!(iomin(&a.bbox, &b.bbox).unwrap(), 0.2);
        let c = Detection::new(BoundingBox::new(0, 0, 20, 20), 0.8);
        let d = Detection::new(BoundingBox::new(19, 0, 20, 20), 0.7);
        assert_eq!(iomin(&c.bbox, &d.bbox).unwrap(), 0.05);
        assert_eq!(nms(&[c, d], 0.1).unwrap().len(), 2);
        let (a, b, c) = (det(0, 0, 10, 0.9), det(5, 0, 10, 0.8), det(10, 0, 10, 0.7));
        assert_eq!(nms(&[c, b, a], 0.1).unwrap(), vec![a, c]);
    }

    #[test]
    fn threshold_examples() {
        let d = [det(0, 0, 5, 0.2), det(9, 0, 5, 0.5), det(20, 0, 5, 0.9)];
        assert_eq!(threshold_detections(&d, 0.5).unwrap(), d[1..].to_vec());
        assert_eq!(threshold_detections(&d, 0.0).unwrap().len(), 3);
        assert!(threshold_detections(&d, 1.01).is_err());
        assert!(threshold_detections(&[det(0, 0, 5, 1.0)], 1.0).unwrap().len() == 1);
        let cfg = DetectorConfig {
            threshold: 1.01,
            ..DetectorConfig::new(21)
        };
        assert!(cfg.validate().is_err());
        assert!(detect(&Image::new(30, 30), &red_net(21), &cfg).is_err());
    }

    #[test]
    fn detection_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = [det(3, 4, 21, 0.123_456_7), det(10, 0, 21, 1.0)];
        write_detections(&path, [("a.png", &d[..]), ("b.png", &[][..])]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "image_path,x,y,side,probability\na.png,3,4,21,0.123457\na.png,10,0,21,1.000000\n");
        let back = read_detections(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].1.bbox, d[0].bbox);
        assert!((back[0].1.probability - 0.123457).abs() < 1e-12);
    }

    #[test]
    fn overlay_draws_both_colours() {
        let img = Image::new(30, 30);
        let out = overlay(&img, &[BoundingBox::new(1, 1, 5, 5)], &[det(10, 10, 8, 0.5)]);
        assert_eq!(*out.get_pixel(1, 1), GREEN);
        assert_eq!(*out.get_pixel(10, 10), MAGENTA);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec((0i64..60, 0i64..60, 3i64..20, 0u32..50), 0..40)
            .prop_map(|v| v.into_iter().map(|(x, y, s, p)| det(x, y, s, f64::from(p) / 49.0)).collect())
    }

    proptest! {
        #[test]
        fn nms_properties(dets in arb_dets(), t in 0.05f64..0.9) {
            let once = nms(&dets, t).unwrap();
            prop_assert_eq!(&nms(&once, t).unwrap(), &once);
            for (i, a) in once.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &once[i + 1..] {
                    prop_assert!(iomin(&a.bbox, &b.bbox).unwrap() < t);
                }
            }
            let mut rev = dets.clone();
            rev.reverse();
            prop_assert_eq!(nms(&rev, t).unwrap(), once);
        }

        #[test]
        fn thresholding_is_monotone(dets in arb_dets(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = threshold_detections(&dets, lo).unwrap();
            let b = threshold_detections(&dets, hi).unwrap();
            prop_assert!(b.iter().all(|d| a.contains(d)));
        }
    }
}
