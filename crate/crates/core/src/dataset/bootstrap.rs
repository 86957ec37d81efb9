use rayon::prelude::*;

use super::augment::Transform;
use super::patches::{Label, PatchRecord, PatchSet};
use super::AnnotatedImage;
use crate::detector::{scan_and_suppress, Detection, DetectorConfig};
use crate::error::Result;
use crate::evaluation::{iomin, match_detections, MATCH_IOMIN};
use crate::nncore::Network;
use crate::scalar::Scalar;

/// Summary of one hard-negative mining pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapReport {
    pub false_positives: usize,
    pub returned: usize,
    pub min_returned_probability: Option<f64>,
    pub max_excluded_probability: Option<f64>,
}

/// Cap for a set of `images` images given `cap` for `reference` images.
pub fn scaled_cap(cap: usize, images: usize, reference: usize) -> usize {
    if reference == 0 {
        return 0;
    }
    (cap as f64 * images as f64 / reference as f64).round() as usize
}

/// Mines the most confident false positives of `net` on the given
/// (colour-corrected) images as background patches.
///
/// Detections are taken after suppression but before any decision
/// threshold. A false positive is a detection left unmatched by the
/// evaluation matcher that also overlaps no ground-truth box by more than
/// the match IOMin.
pub fn bootstrap_negatives<T: Scalar>(
    net: &Network<T>,
    images: &[AnnotatedImage],
    indices: &[usize],
    cfg: &DetectorConfig,
    cap: usize,
) -> Result<(PatchSet, BootstrapReport)> {
    let per_image: Vec<Vec<(usize, Detection)>> = indices
        .par_iter()
        .map(|&i| -> Result<Vec<(usize, Detection)>> {
            let img = &images[i];
            let dets = scan_and_suppress(&img.image, net, cfg)?;
            let m = match_detections(&img.boxes, &dets)?;
            let mut fps = Vec::new();
            for d in m.false_positives {
                let det = dets[d];
                let mut clear = true;
                for b in &img.boxes {
                    if iomin(b, &det.bbox)? > MATCH_IOMIN {
                        clear = false;
                        break;
                    }
                }
                if clear {
                    fps.push((i, det));
                }
            }
            Ok(fps)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<(usize, Detection)> = per_image.into_iter().flatten().collect();
    all.sort_by(|(ia, a), (ib, b)| {
        let (ca, cb) = (a.center(), b.center());
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| images[*ia].path.cmp(&images[*ib].path))
            .then(ca.y.cmp(&cb.y))
            .then(ca.x.cmp(&cb.x))
    });
    let total = all.len();
    let max_excluded_probability = all.get(cap).map(|(_, d)| d.probability);
    all.truncate(cap);
    let report = BootstrapReport {
        false_positives: total,
        returned: all.len(),
        min_returned_probability: all.last().map(|(_, d)| d.probability),
        max_excluded_probability,
    };
    if total < cap {
        log::info!("bootstrap found {total} false positives, below the cap of {cap}");
    } else {
        log::info!("bootstrap kept {cap} of {total} false positives");
    }
    let records = all
        .into_iter()
        .map(|(image, d)| PatchRecord {
            image,
            center: d.center(),
            side: cfg.side,
            transform: Transform::IDENTITY,
            label: Label::Background,
        })
        .collect();
    Ok((PatchSet::new(records), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{BoundingBox, Image, CHANNELS};
    use crate::nncore::{Activation, FcLayer, Layer, Standardizer};
    use image::Rgb;

    /// Probability rises with mean window brightness.
    fn bright_net(side: usize, bias: f64) -> Network<f64> {
        let n = side * side * CHANNELS;
        let mut w = vec![0.0; 2 * n];
        for v in &mut w[n..] {
            *v = 1.0 / n as f64 / 16.0;
        }
        let fc = FcLayer {
            outputs: 2,
            inputs: n,
            weights: w,
            biases: vec![0.0, bias],
            activation: Activation::Softmax,
        };
        Network::from_layers(side, CHANNELS, vec![Layer::Fc(fc)], Standardizer::Identity).unwrap()
    }

    fn scene() -> Vec<AnnotatedImage> {
        let mut img = Image::from_pixel(64, 64, Rgb([10, 10, 10]));
        for (x0, y0, v) in [(4u32, 4u32, 250u8), (40, 40, 200), (40, 4, 150)] {
            for y in y0..y0 + 8 {
                for x in x0..x0 + 8 {
                    img.put_pixel(x, y, Rgb([v, v, v]));
                }
            }
        }
        vec![AnnotatedImage {
            path: "s.png".into(),
            image: img,
            boxes: vec![BoundingBox::new(4, 4, 8, 8)],
        }]
    }

    #[test]
    fn mines_unmatched_bright_windows() {
        let images = scene();
        let net = bright_net(8, 0.0);
        let cfg = DetectorConfig::new(8);
        let (set, report) = bootstrap_negatives(&net, &images, &[0], &cfg, 3).unwrap();
        assert_eq!(set.len(), 3);
        assert!(report.false_positives > 3);
        assert!(report.min_returned_probability.unwrap() >= report.max_excluded_probability.unwrap());
        assert_eq!(set.records[0].center, crate::imaging::Point::new(44, 44));
        for r in &set.records {
            let bb = BoundingBox::square(r.center.x - 4, r.center.y - 4, 8);
            assert!(iomin(&bb, &images[0].boxes[0]).unwrap() <= MATCH_IOMIN);
            assert_eq!(r.label, Label::Background);
        }
        let (all, rep) = bootstrap_negatives(&net, &images, &[0], &cfg, 10_000).unwrap();
        assert_eq!(all.len(), rep.false_positives);
        assert_eq!(rep.max_excluded_probability, None);
    }

    #[test]
    fn cap_scaling() {
        assert_eq!(scaled_cap(6000, 27, 110), 1473);
        assert_eq!(scaled_cap(6000, 110, 110), 6000);
        assert_eq!(scaled_cap(6000, 5, 0), 0);
    }

    #[test]
    fn empty_when_everything_matches() {
        let mut images = scene();
        images[0].image = Image::from_pixel(8, 8, Rgb([200, 200, 200]));
        images[0].boxes = vec![BoundingBox::new(0, 0, 8, 8)];
        let (set, rep) = bootstrap_negatives(&bright_net(8, 0.0), &images, &[0], &DetectorConfig::new(8), 6000).unwrap();
        assert!(set.is_empty());
        assert_eq!(rep.returned, 0);
    }
}
