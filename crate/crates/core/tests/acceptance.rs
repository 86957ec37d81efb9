//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any fails. Criterion numbers can be passed as arguments
//! to run a subset, e.g. `cargo test --test acceptance -- 1 4 10`.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{
    finite_difference_gradient, pixel_intersection, pixel_iomin, reference_match, relative_error,
};
use mothtrap::dataset::{augment_patch, Transform, DIHEDRAL, NUM_TRANSFORMS};
use mothtrap::detector::{nms, sliding_window_scan, Detection, DetectorConfig};
use mothtrap::evaluation::{fbeta, iomin, match_detections, object_metrics, ObjectCounts, ObjectMetrics};
use mothtrap::imaging::{channel_means, grey_world_correct, BoundingBox, Image, Point};
use mothtrap::nncore::{backprop_gradients, Architecture, Layer, Network, Standardizer};
use mothtrap::pipeline::{evaluate_detector, load_corrected, repro, train_detector, ModelKind, Settings};
use mothtrap::dataset::AugmentMode;
use mothtrap::synthgen::{generate_dataset, generate_scene, SceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_EPS: f64 = 1e-5;
const GREY_WORLD_SPREAD: f64 = 1.0;
const GREY_WORLD_IDEMPOTENCE: i32 = 1;
const NMS_THRESHOLD: f64 = 0.10;
const MIN_CONVNET_AUC: f64 = 0.85;
const MIN_GAP_OVER_LOGREG: f64 = 0.05;
const MIN_AUGMENTATION_GAIN: f64 = 0.03;
const MIN_REDUCED_DATA_AUC: f64 = 0.70;
const F2_REFERENCE: f64 = 0.7692;
const F2_TOLERANCE: f64 = 1e-4;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_oracle() -> Outcome {
    let arch = Architecture { conv: vec![(2, 3)], hidden: vec![8] };
    let mut net = Network::<f64>::convnet(11, 3, &arch, 42).map_err(|e| e.to_string())?;
    // nonzero biases keep every ReLU off its kink
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for layer in net.layers_mut() {
        match layer {
            Layer::Conv(c) => c.biases.iter_mut().for_each(|b| *b = rng.random_range(0.01..0.1)),
            Layer::Fc(f) => f.biases.iter_mut().for_each(|b| *b = rng.random_range(0.01..0.1)),
            Layer::MaxPool => {}
        }
    }
    let inputs: Vec<Vec<f64>> = (0..8)
        .map(|_| (0..net.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let bg = backprop_gradients(&net, &inputs, &labels).map_err(|e| e.to_string())?;
    let fd = finite_difference_gradient(&net, &inputs, &labels, GRADIENT_EPS);
    let worst = bg.grads.iter().zip(&fd).map(|(a, n)| relative_error(*a, *n)).fold(0.0, f64::max);
    ensure(worst < GRADIENT_TOLERANCE, || format!("worst relative error {worst:e}"))?;
    Ok(format!("{} parameters, worst relative error {worst:.2e}", fd.len()))
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    BoundingBox::new(rng.random_range(0..30), rng.random_range(0..30), rng.random_range(1..15), rng.random_range(1..15))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for scene in 0..500 {
        let gt: Vec<BoundingBox> = (0..rng.random_range(0..=6)).map(|_| random_box(&mut rng)).collect();
        let dets: Vec<(BoundingBox, f64)> = (0..rng.random_range(0..=10))
            .map(|_| (random_box(&mut rng), f64::from(rng.random_range(1..=5u8)) / 5.0))
            .collect();
        let lib_dets: Vec<Detection> = dets.iter().map(|(b, p)| Detection::new(*b, *p)).collect();
        let m = match_detections(&gt, &lib_dets).map_err(|e| e.to_string())?;
        let (matched, missed, fp) = reference_match(&gt, &dets);
        let got = (m.matched.len(), m.missed.len(), m.false_positives.len());
        ensure(got == (matched, missed, fp), || format!("scene {scene}: {got:?} vs {:?}", (matched, missed, fp)))?;
        let lib = object_metrics(&ObjectCounts { moths: gt.len(), detections: dets.len(), correct: m.matched.len(), images: 1 });
        let expected = reference_object_metrics(gt.len(), dets.len(), matched);
        ensure(lib == expected, || format!("scene {scene}: {lib:?} vs {expected:?}"))?;
    }
    for pair in 0..1000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let lib = iomin(&a, &b).map_err(|e| e.to_string())?;
        ensure(lib == pixel_iomin(&a, &b), || format!("pair {pair}: {a:?} {b:?}"))?;
        ensure(a.intersection_area(&b) == pixel_intersection(&a, &b), || format!("pair {pair} intersection"))?;
    }
    Ok("500 scenes and 1000 box pairs agree".into())
}

fn reference_object_metrics(moths: usize, detections: usize, correct: usize) -> ObjectMetrics {
    let precision = if detections == 0 { 1.0 } else { correct as f64 / detections as f64 };
    let recall = (moths > 0).then(|| correct as f64 / moths as f64);
    ObjectMetrics {
        miss_rate: (moths > 0).then(|| (moths - correct) as f64 / moths as f64),
        fppi: (detections - correct) as f64,
        precision,
        recall,
        f2: recall.map(|r| if precision + r == 0.0 { 0.0 } else { 5.0 * precision * r / (4.0 * precision + r) }),
    }
}

fn noise_image(w: u32, h: u32, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(w, h, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]))
}

fn augmentation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let img = noise_image(40, 40, &mut rng);
        let side = [5usize, 11, 21][rng.random_range(0..3)];
        let center = Point::new(rng.random_range(0..40), rng.random_range(0..40));
        let patches = augment_patch(&img, center, side).map_err(|e| e.to_string())?;
        ensure(patches.len() == NUM_TRANSFORMS && NUM_TRANSFORMS == 72, || format!("{} patches", patches.len()))?;

        let base: Vec<_> = patches[..DIHEDRAL].to_vec();
        let set: HashSet<Vec<u8>> = base.iter().map(|p| p.data().to_vec()).collect();
        ensure(set.len() == DIHEDRAL, || "zero-shift variants are not distinct".into())?;
        for p in &base {
            for q in [p.rotate90(), p.flip_horizontal()] {
                ensure(set.contains(q.data()), || "zero-shift subset is not closed".into())?;
            }
            ensure(p.rotate90().rotate90().rotate90().rotate90() == *p, || "four quarter turns differ".into())?;
        }
        for id in 0..NUM_TRANSFORMS as u8 {
            let t = Transform::from_id(id).map_err(|e| e.to_string())?;
            ensure(t.id() == id, || format!("transform id {id} does not round-trip"))?;
        }
    }
    Ok("72 outputs, closed dihedral subset, rotation order 4".into())
}

fn nms_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for set in 0..1000 {
        let dets: Vec<Detection> = (0..rng.random_range(0..40))
            .map(|_| {
                let side = rng.random_range(3..12);
                Detection::new(
                    BoundingBox::square(rng.random_range(0..50), rng.random_range(0..50), side),
                    f64::from(rng.random_range(0..=20u8)) / 20.0,
                )
            })
            .collect();
        let once = nms(&dets, NMS_THRESHOLD).map_err(|e| e.to_string())?;
        let twice = nms(&once, NMS_THRESHOLD).map_err(|e| e.to_string())?;
        ensure(once == twice, || format!("set {set}: not idempotent"))?;
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                let o = pixel_iomin(&a.bbox, &b.bbox);
                ensure(o < NMS_THRESHOLD, || format!("set {set}: survivors overlap {o}"))?;
            }
        }
    }
    let a = Detection::new(BoundingBox::square(0, 0, 10), 0.9);
    let b = Detection::new(BoundingBox::square(5, 0, 10), 0.8);
    let c = Detection::new(BoundingBox::square(10, 0, 10), 0.7);
    ensure(pixel_iomin(&a.bbox, &b.bbox) == 0.5 && pixel_iomin(&b.bbox, &c.bbox) == 0.5, || "bad example".into())?;
    ensure(pixel_iomin(&a.bbox, &c.bbox) == 0.0, || "bad example".into())?;
    let out = nms(&[b, c, a], NMS_THRESHOLD).map_err(|e| e.to_string())?;
    ensure(out == vec![a, c], || format!("survivors {out:?}"))?;
    Ok("1000 random sets; example keeps {A, C}".into())
}

fn grey_world() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_spread = 0.0f64;
    let mut worst_step = 0;
    for i in 0..200 {
        let cfg = SceneConfig {
            width: 96,
            height: 72,
            mean_moths: rng.random_range(0.0..3.0),
            body_length: (8.0, 12.0),
            body_width: (3.0, 5.0),
            lure_radius: (8.0, 16.0),
            specks: 20,
            seed: rng.random(),
            ..Default::default()
        };
        let scene = generate_scene(&cfg, i).map_err(|e| e.to_string())?;
        let gains: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.4..1.0));
        let mut tinted = scene.image;
        for p in tinted.pixels_mut() {
            for c in 0..3 {
                p.0[c] = (f64::from(p.0[c]) * gains[c]).round() as u8;
            }
        }
        let once = grey_world_correct(&tinted);
        let m = channel_means(&once);
        let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
        worst_spread = worst_spread.max(spread);
        ensure(spread <= GREY_WORLD_SPREAD, || format!("image {i}: channel means {m:?}"))?;
        let twice = grey_world_correct(&once);
        for (p, q) in once.pixels().zip(twice.pixels()) {
            for c in 0..3 {
                let d = (i32::from(p.0[c]) - i32::from(q.0[c])).abs();
                worst_step = worst_step.max(d);
                ensure(d <= GREY_WORLD_IDEMPOTENCE, || format!("image {i}: reapplying moved a pixel by {d}"))?;
            }
        }
    }
    Ok(format!("200 images, worst mean spread {worst_spread:.3}, worst reapply step {worst_step}"))
}

fn enumerate_windows(w: u32, h: u32, side: usize, stride: usize) -> usize {
    let mut n = 0;
    let mut y = 0;
    while y + side <= h as usize {
        let mut x = 0;
        while x + side <= w as usize {
            n += 1;
            x += stride;
        }
        y += stride;
    }
    n
}

fn window_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let count = |w: u32, h: u32, side: usize| -> Result<usize, String> {
        let mut net = Network::<f64>::logistic_regression(side, 3).map_err(|e| e.to_string())?;
        net.set_standardizer(Standardizer::Identity).map_err(|e| e.to_string())?;
        let img = Image::new(w, h);
        Ok(sliding_window_scan(&img, &net, &DetectorConfig::new(side)).map_err(|e| e.to_string())?.len())
    };
    for _ in 0..50 {
        let side = rng.random_range(4..=35usize);
        let w = rng.random_range(side as u32..=200);
        let h = rng.random_range(side as u32..=160);
        let stride = side / 4;
        let formula = ((w as usize - side) / stride + 1) * ((h as usize - side) / stride + 1);
        let enumerated = enumerate_windows(w, h, side, stride);
        let got = count(w, h, side)?;
        ensure(got == formula && formula == enumerated, || {
            format!("{w}x{h} side {side}: scan {got}, formula {formula}, enumeration {enumerated}")
        })?;
    }
    let full = count(640, 480, 21)?;
    ensure(full == 11408, || format!("640x480 gives {full}"))?;
    Ok("50 triples match; 640x480 side 21 gives 11408".into())
}

/// Settings shared by the trend criteria. The architecture and epoch budget
/// are reduced so the whole suite fits a single core.
fn trend_settings() -> Settings {
    let mut s = Settings::default();
    for (k, v) in [
        ("conv", "8x5,16x5"),
        ("hidden", "64"),
        ("epochs", "15"),
        ("stage2_epochs", "15"),
        ("epoch_samples", "8192"),
        ("batch_size", "64"),
        ("learning_rate", "0.01"),
    ] {
        s.set(k, v).expect("valid acceptance setting");
    }
    s
}

struct TrendData {
    train: Vec<mothtrap::dataset::AnnotatedImage>,
    val: Vec<mothtrap::dataset::AnnotatedImage>,
    test: Vec<mothtrap::dataset::AnnotatedImage>,
    auc: std::collections::HashMap<&'static str, f64>,
}

impl TrendData {
    fn load(dir: &Path) -> Result<Self, String> {
        let s = trend_settings();
        let files = generate_dataset(&s.scene, s.split_counts, dir).map_err(|e| e.to_string())?;
        let load = |p: &Path| load_corrected(p).map_err(|e| e.to_string());
        Ok(Self {
            train: load(&files.annotations[0])?,
            val: load(&files.annotations[1])?,
            test: load(&files.annotations[2])?,
            auc: Default::default(),
        })
    }

    fn auc(&mut self, variant: &'static str) -> Result<f64, String> {
        if let Some(a) = self.auc.get(variant) {
            return Ok(*a);
        }
        let mut s = trend_settings();
        match variant {
            "convnet" => {}
            "logreg" => s.model = ModelKind::LogReg,
            "no-augmentation" => s.augmentation = AugmentMode::None,
            "20%-data" => s.train_fraction = 0.2,
            _ => unreachable!(),
        }
        let t = Instant::now();
        let det = train_detector(&self.train, &self.val, &s).map_err(|e| e.to_string())?;
        let (_, report) = evaluate_detector(&det.net, &self.test, &s.detector_config()).map_err(|e| e.to_string())?;
        let auc = report.object_pr_auc.ok_or("no test moths")?;
        println!("    {variant}: object PR AUC {auc:.4} ({:.0?})", t.elapsed());
        self.auc.insert(variant, auc);
        Ok(auc)
    }
}

fn end_to_end(data: &mut TrendData) -> Outcome {
    let conv = data.auc("convnet")?;
    let lr = data.auc("logreg")?;
    let msg = format!("ConvNet {conv:.4}, logistic regression {lr:.4}");
    ensure(conv >= MIN_CONVNET_AUC && conv - lr >= MIN_GAP_OVER_LOGREG, || msg.clone())?;
    Ok(msg)
}

fn augmentation_ablation(data: &mut TrendData) -> Outcome {
    let both = data.auc("convnet")?;
    let none = data.auc("no-augmentation")?;
    let msg = format!("both {both:.4}, none {none:.4}");
    ensure(both - none >= MIN_AUGMENTATION_GAIN, || msg.clone())?;
    Ok(msg)
}

fn data_reduction(data: &mut TrendData) -> Outcome {
    let full = data.auc("convnet")?;
    let reduced = data.auc("20%-data")?;
    let msg = format!("100% {full:.4}, 20% {reduced:.4}");
    ensure(reduced < full && reduced >= MIN_REDUCED_DATA_AUC, || msg.clone())?;
    Ok(msg)
}

fn f2_spot_checks() -> Outcome {
    let v = fbeta(2.0 / 3.0, 0.8, 2.0);
    ensure((v - F2_REFERENCE).abs() <= F2_TOLERANCE, || format!("fbeta(2/3, 0.8, 2) = {v}"))?;
    for p in [0.1f64, 0.5, 0.9] {
        for beta in [1.0, 2.0] {
            let v = fbeta(p, p, beta);
            ensure((v - p).abs() < 1e-12, || format!("fbeta({p}, {p}, {beta}) = {v}"))?;
        }
    }
    Ok(format!("fbeta(2/3, 0.8, 2) = {v:.6}"))
}

fn determinism(root: &Path) -> Outcome {
    let mut s = trend_settings();
    for (k, v) in [
        ("train_images", "8"),
        ("val_images", "6"),
        ("test_images", "3"),
        ("no_moth_fraction", "0.5"),
        ("scene_width", "200"),
        ("scene_height", "160"),
        ("mean_moths", "6"),
        ("epochs", "2"),
        ("stage2_epochs", "2"),
        ("epoch_samples", "1024"),
    ] {
        s.set(k, v).map_err(|e| e.to_string())?;
    }
    let run = |name: &str| repro(&s, &root.join(name)).map_err(|e| e.to_string());
    let (a, b) = (run("a")?, run("b")?);
    let pairs = [
        (&a.outputs.checkpoint, &b.outputs.checkpoint),
        (&a.outputs.history, &b.outputs.history),
        (&a.outputs.detections, &b.outputs.detections),
        (&a.outputs.curves, &b.outputs.curves),
        (&a.outputs.summary, &b.outputs.summary),
        (&a.outputs.manifest, &b.outputs.manifest),
    ];
    let mut bytes = 0;
    for (x, y) in pairs {
        let (bx, by) = (std::fs::read(x).map_err(|e| e.to_string())?, std::fs::read(y).map_err(|e| e.to_string())?);
        let name = x.file_name().unwrap().to_string_lossy().to_string();
        ensure(!bx.is_empty() && bx == by, || format!("{name} differs"))?;
        bytes += bx.len();
    }
    Ok(format!("6 output files identical ({bytes} bytes)"))
}

fn trend_data<'a>(slot: &'a mut Option<TrendData>, tmp: &Path) -> Result<&'a mut TrendData, String> {
    if slot.is_none() {
        *slot = Some(TrendData::load(&tmp.join("trend"))?);
    }
    Ok(slot.as_mut().unwrap())
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut trend: Option<TrendData> = None;

    let mut failures = 0;
    for n in 1..=11 {
        if !wanted(n) {
            continue;
        }
        let t = Instant::now();
        let (name, outcome): (&str, Outcome) = {
            let run = |f: &mut dyn FnMut() -> Outcome| {
                catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
            };
            match n {
                1 => ("gradient oracle", run(&mut gradient_oracle)),
                2 => ("metric oracle", run(&mut metric_oracle)),
                3 => ("augmentation", run(&mut augmentation)),
                4 => ("nms", run(&mut nms_properties)),
                5 => ("grey-world", run(&mut grey_world)),
                6 => ("window count", run(&mut window_count)),
                7 => ("end-to-end trend", run(&mut || end_to_end(trend_data(&mut trend, tmp.path())?))),
                8 => ("augmentation ablation", run(&mut || augmentation_ablation(trend_data(&mut trend, tmp.path())?))),
                9 => ("data reduction", run(&mut || data_reduction(trend_data(&mut trend, tmp.path())?))),
                10 => ("f2 spot checks", run(&mut f2_spot_checks)),
                11 => ("determinism", run(&mut || determinism(tmp.path()))),
                _ => unreachable!(),
            }
        };
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
