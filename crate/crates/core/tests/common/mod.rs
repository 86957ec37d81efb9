//! Reference implementations used as test oracles. They are written for
//! clarity, share no code with the library, and are slow on purpose.

#![allow(dead_code)]

use mothtrap::imaging::BoundingBox;
use mothtrap::nncore::{Activation, Layer, Network, Standardizer};

/// Naive forward pass returning class probabilities.
pub fn reference_forward(net: &Network<f64>, input: &[f64]) -> Vec<f64> {
    let mut x: Vec<f64> = match net.standardizer() {
        Standardizer::Identity => input.to_vec(),
        Standardizer::PerDimension { mean, std } => input
            .iter()
            .zip(mean.iter().zip(std))
            .map(|(v, (m, s))| if *s < 1e-8 { 0.0 } else { (v - m) / s })
            .collect(),
        Standardizer::PerPatch => {
            let n = input.len() as f64;
            let m = input.iter().sum::<f64>() / n;
            let s = (input.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            input.iter().map(|v| if s < 1e-8 { 0.0 } else { (v - m) / s }).collect()
        }
    };
    let (mut c, mut h, mut w) = (net.channels(), net.input_side(), net.input_side());
    for layer in net.layers() {
        match layer {
            Layer::Conv(l) => {
                let (oh, ow) = (h - l.kh + 1, w - l.kw + 1);
                let mut y = vec![0.0; l.out_maps * oh * ow];
                for k in 0..l.out_maps {
                    for r in 0..oh {
                        for q in 0..ow {
                            let mut s = l.biases[k];
                            for m in 0..l.in_maps {
                                for i in 0..l.kh {
                                    for j in 0..l.kw {
                                        s += l.weights[((k * l.in_maps + m) * l.kh + i) * l.kw + j]
                                            * x[(m * h + r + i) * w + q + j];
                                    }
                                }
                            }
                            y[(k * oh + r) * ow + q] = s.max(0.0);
                        }
                    }
                }
                x = y;
                (c, h, w) = (l.out_maps, oh, ow);
            }
            Layer::MaxPool => {
                let (oh, ow) = (h / 2, w / 2);
                let mut y = vec![0.0; c * oh * ow];
                for m in 0..c {
                    for r in 0..oh {
                        for q in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                best = best.max(x[(m * h + 2 * r + di) * w + 2 * q + dj]);
                            }
                            y[(m * oh + r) * ow + q] = best;
                        }
                    }
                }
                x = y;
                (h, w) = (oh, ow);
            }
            Layer::Fc(l) => {
                let mut z: Vec<f64> = (0..l.outputs)
                    .map(|o| l.biases[o] + (0..l.inputs).map(|i| l.weights[o * l.inputs + i] * x[i]).sum::<f64>())
                    .collect();
                match l.activation {
                    Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                    Activation::Softmax => {
                        let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
                        let t: f64 = e.iter().sum();
                        z = e.into_iter().map(|v| v / t).collect();
                    }
                }
                x = z;
                (c, h, w) = (l.outputs, 1, 1);
            }
        }
    }
    x
}

/// Mean cross-entropy of the reference forward pass.
pub fn reference_loss(net: &Network<f64>, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    inputs
        .iter()
        .zip(labels)
        .map(|(x, &y)| -reference_forward(net, x)[y].ln())
        .sum::<f64>()
        / inputs.len() as f64
}

/// Central finite differences of the reference loss for every parameter.
pub fn finite_difference_gradient(net: &Network<f64>, inputs: &[Vec<f64>], labels: &[usize], eps: f64) -> Vec<f64> {
    let n = net.num_params();
    let mut probe = net.clone();
    (0..n)
        .map(|k| {
            let orig = *net.params().nth(k).unwrap();
            *probe.params_mut().nth(k).unwrap() = orig + eps;
            let up = reference_loss(&probe, inputs, labels);
            *probe.params_mut().nth(k).unwrap() = orig - eps;
            let down = reference_loss(&probe, inputs, labels);
            *probe.params_mut().nth(k).unwrap() = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Pixel-counting overlap of two boxes.
pub fn pixel_intersection(a: &BoundingBox, b: &BoundingBox) -> i64 {
    let mut n = 0;
    for y in a.y..a.y + a.h {
        for x in a.x..a.x + a.w {
            if x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h {
                n += 1;
            }
        }
    }
    n
}

pub fn pixel_iomin(a: &BoundingBox, b: &BoundingBox) -> f64 {
    pixel_intersection(a, b) as f64 / (a.w * a.h).min(b.w * b.h) as f64
}

/// Literal per-ground-truth matcher: walk ground truth in order; collect all
/// unclaimed detections with IOMin above one half; claim the most probable,
/// breaking ties by smaller y then smaller x. Returns
/// `(matched, missed, false positives)`.
pub fn reference_match(gt: &[BoundingBox], dets: &[(BoundingBox, f64)]) -> (usize, usize, usize) {
    let mut claimed = vec![false; dets.len()];
    let mut matched = 0;
    for g in gt {
        let candidates: Vec<usize> = (0..dets.len())
            .filter(|&d| !claimed[d] && pixel_iomin(g, &dets[d].0) > 0.5)
            .collect();
        let best = candidates.into_iter().reduce(|a, b| {
            let (da, db) = (&dets[a], &dets[b]);
            let ka = (da.1, -da.0.y, -da.0.x);
            let kb = (db.1, -db.0.y, -db.0.x);
            if kb > ka {
                b
            } else {
                a
            }
        });
        if let Some(d) = best {
            claimed[d] = true;
            matched += 1;
        }
    }
    (matched, gt.len() - matched, dets.len() - matched)
}
