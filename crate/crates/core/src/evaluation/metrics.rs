use num_traits::Float;

/// Weighted harmonic combination of precision and recall; 0 when both are 0.
pub fn fbeta<T: Float>(precision: T, recall: T, beta: T) -> T {
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == T::zero() {
        return T::zero();
    }
    (T::one() + b2) * precision * recall / denom
}

pub fn f2(precision: f64, recall: f64) -> f64 {
    fbeta(precision, recall, 2.0)
}

/// Dataset-level object counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ObjectCounts {
    pub moths: usize,
    pub detections: usize,
    pub correct: usize,
    pub images: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectMetrics {
    /// Absent when there are no ground-truth moths.
    pub miss_rate: Option<f64>,
    pub fppi: f64,
    /// 1 when there are no detections.
    pub precision: f64,
    pub recall: Option<f64>,
    pub f2: Option<f64>,
}

pub fn object_metrics(c: &ObjectCounts) -> ObjectMetrics {
    let precision = if c.detections == 0 {
        1.0
    } else {
        c.correct as f64 / c.detections as f64
    };
    let recall = (c.moths > 0).then(|| c.correct as f64 / c.moths as f64);
    ObjectMetrics {
        miss_rate: (c.moths > 0).then(|| (c.moths - c.correct) as f64 / c.moths as f64),
        fppi: if c.images == 0 {
            0.0
        } else {
            (c.detections - c.correct) as f64 / c.images as f64
        },
        precision,
        recall,
        f2: recall.map(|r| f2(precision, r)),
    }
}

/// Dataset-level image proposal counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImageCounts {
    pub moth_images: usize,
    pub empty_images: usize,
    /// Moth images with at least one surviving detection.
    pub true_proposals: usize,
    /// Moth-free images with at least one surviving detection.
    pub false_proposals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: f64,
    pub f2: Option<f64>,
}

pub fn image_metrics(c: &ImageCounts) -> ImageMetrics {
    let proposals = c.true_proposals + c.false_proposals;
    let precision = if proposals == 0 {
        1.0
    } else {
        c.true_proposals as f64 / proposals as f64
    };
    let sensitivity = (c.moth_images > 0).then(|| c.true_proposals as f64 / c.moth_images as f64);
    ImageMetrics {
        sensitivity,
        specificity: (c.empty_images > 0)
            .then(|| (c.empty_images - c.false_proposals) as f64 / c.empty_images as f64),
        precision,
        f2: sensitivity.map(|s| f2(precision, s)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn object_example() {
        let m = object_metrics(&ObjectCounts {
            moths: 10,
            detections: 12,
            correct: 8,
            images: 4,
        });
        assert!((m.miss_rate.unwrap() - 0.2).abs() < 1e-12);
        assert!((m.fppi - 1.0).abs() < 1e-12);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall.unwrap() - 0.8).abs() < 1e-12);
        assert!((m.f2.unwrap() - 0.769_230_769).abs() < 1e-6);
    }

    #[test]
    fn conventions() {
        let m = object_metrics(&ObjectCounts {
            moths: 5,
            detections: 0,
            correct: 0,
            images: 2,
        });
        assert_eq!((m.precision, m.recall, m.f2), (1.0, Some(0.0), Some(0.0)));
        let m = object_metrics(&ObjectCounts {
            moths: 0,
            detections: 3,
            correct: 0,
            images: 2,
        });
        assert_eq!((m.miss_rate, m.recall, m.f2), (None, None, None));
        assert_eq!(m.fppi, 1.5);
    }

    #[test]
    fn image_example() {
        let m = image_metrics(&ImageCounts {
            moth_images: 30,
            empty_images: 10,
            true_proposals: 30,
            false_proposals: 2,
        });
        assert_eq!(m.sensitivity, Some(1.0));
        assert!((m.specificity.unwrap() - 0.8).abs() < 1e-12);
        assert!((m.precision - 30.0 / 32.0).abs() < 1e-12);
        let none = image_metrics(&ImageCounts {
            moth_images: 30,
            empty_images: 10,
            ..Default::default()
        });
        assert_eq!((none.sensitivity, none.specificity, none.precision), (Some(0.0), Some(1.0), 1.0));
        let all = image_metrics(&ImageCounts {
            moth_images: 30,
            empty_images: 10,
            true_proposals: 30,
            false_proposals: 10,
        });
        assert_eq!((all.sensitivity, all.specificity), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn fbeta_examples() {
        assert_eq!(fbeta(1.0, 1.0, 2.0), 1.0);
        assert!((fbeta(0.5, 1.0, 2.0) - 2.5 / 3.0).abs() < 1e-12);
        assert!((fbeta(0.2, 0.8, 1.0) - 0.32).abs() < 1e-12);
        assert_eq!(fbeta(0.0, 0.0, 2.0), 0.0);
        assert!((fbeta(0.5f32, 0.5, 2.0) - 0.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn recall_complements_miss_rate(moths in 1usize..50, extra in 0usize..50, frac in 0.0f64..=1.0, images in 1usize..10) {
            let correct = (moths as f64 * frac) as usize;
            let m = object_metrics(&ObjectCounts { moths, detections: correct + extra, correct, images });
            prop_assert!((m.recall.unwrap() + m.miss_rate.unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn f2_leans_towards_recall(p in 0.01f64..1.0, r in 0.01f64..1.0) {
            prop_assume!((p - r).abs() > 1e-6);
            prop_assert!((f2(p, r) - r).abs() < (fbeta(p, r, 1.0) - r).abs());
        }

        #[test]
        fn fbeta_fixed_point(p in 0.0f64..=1.0, beta in 0.1f64..5.0) {
            prop_assert!((fbeta(p, p, beta) - p).abs() < 1e-12);
        }
    }
}
