use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use mothtrap::dataset::{
    bootstrap_negatives, load_dataset, read_annotations, read_manifest, write_manifest, AnnotatedImage,
    AnnotationEntry, Label,
};
use mothtrap::detector::{self, read_detections, write_detections, Detection};
use mothtrap::evaluation::report::{summary_rows, write_curves, write_summary, write_svg, Level};
use mothtrap::evaluation::{sweep, EvalReport, ScoredImage};
use mothtrap::imaging::canny_edges;
use mothtrap::imaging::io::{load_image, save_png};
use mothtrap::nncore::{checkpoint, Network};
use mothtrap::pipeline::{
    extract_patches, load_corrected, repro, train_from_plan, write_history, PatchPlan, Settings,
};
use mothtrap::synthgen::generate_dataset;

use crate::{Cli, Command, TrainFlags};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { out, seed } => {
            let mut s = base_settings(cli)?;
            if let Some(seed) = seed {
                s.set("seed", &seed.to_string())?;
            }
            synth(&s, &out_dir(cli, out, "synth"))
        }
        Command::Extract {
            data,
            out,
            edges,
            flags,
        } => {
            let s = train_settings(cli, flags)?;
            extract(&s, &data_dir(cli, data), &out_dir(cli, out, "extract"), *edges)
        }
        Command::Train {
            data,
            patches,
            out,
            flags,
        } => {
            let s = train_settings(cli, flags)?;
            train(&s, &data_dir(cli, data), patches.as_deref(), &out_dir(cli, out, "train"))
        }
        Command::Bootstrap {
            model,
            annotations,
            cap,
            out,
        } => {
            let mut s = base_settings(cli)?;
            if let Some(cap) = cap {
                s.set("bootstrap_cap", &cap.to_string())?;
            }
            let model = model.clone().unwrap_or_else(|| cli.root.join("train/model.ckpt"));
            let ann = annotations
                .clone()
                .unwrap_or_else(|| cli.root.join("synth/train.csv"));
            bootstrap(s, &model, &ann, &out_dir(cli, out, "bootstrap"))
        }
        Command::Detect {
            model,
            images,
            threshold,
            overlay,
            out,
        } => {
            let mut s = base_settings(cli)?;
            if let Some(t) = threshold {
                s.set("threshold", &t.to_string())?;
            }
            let model = model.clone().unwrap_or_else(|| cli.root.join("train/model.ckpt"));
            let images = images.clone().unwrap_or_else(|| cli.root.join("synth/test.csv"));
            detect(s, &model, &images, *overlay, &out_dir(cli, out, "detect"))
        }
        Command::Evaluate {
            annotations,
            detections,
            level,
            out,
        } => {
            let s = base_settings(cli)?;
            let level: Level = level.parse()?;
            let ann = annotations.clone().unwrap_or_else(|| cli.root.join("synth/test.csv"));
            let dets = detections
                .clone()
                .unwrap_or_else(|| cli.root.join("detect/detections.csv"));
            evaluate(&s, &ann, &dets, level, &out_dir(cli, out, "evaluate"))
        }
        Command::Report {
            annotations,
            runs,
            level,
            overlay,
            out,
        } => {
            let s = base_settings(cli)?;
            let level: Level = level.parse()?;
            let ann = annotations.clone().unwrap_or_else(|| cli.root.join("synth/test.csv"));
            let runs = parse_runs(runs, &cli.root)?;
            report(&s, &ann, &runs, level, *overlay, &out_dir(cli, out, "report"))
        }
        Command::Repro { out, flags } => {
            let s = train_settings(cli, flags)?;
            run_repro(&s, &out_dir(cli, out, "repro"))
        }
    }
}

fn out_dir(cli: &Cli, out: &Option<PathBuf>, name: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| cli.root.join(name))
}

fn data_dir(cli: &Cli, data: &Option<PathBuf>) -> PathBuf {
    data.clone().unwrap_or_else(|| cli.root.join("synth"))
}

/// Defaults, then the config file, then `--set` overrides.
fn base_settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        s.apply_config(&text)
            .with_context(|| format!("in config {}", path.display()))?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        s.set(k.trim(), v)?;
    }
    Ok(s)
}

fn train_settings(cli: &Cli, flags: &TrainFlags) -> Result<Settings> {
    let mut s = base_settings(cli)?;
    let pairs = [
        ("seed", flags.seed.map(|v| v.to_string())),
        ("patch_size", flags.patch_size.map(|v| v.to_string())),
        ("aug", flags.aug.clone()),
        ("model", flags.model.clone()),
        ("train_fraction", flags.train_fraction.map(|v| v.to_string())),
        ("bootstrap", flags.bootstrap.map(|v| v.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            s.set(k, &v)?;
        }
    }
    s.validate()?;
    Ok(s)
}

/// Writes `manifest.conf`: the command and its inputs as comments, then the
/// resolved configuration. Feeding it back through `--config` reproduces
/// the run.
fn write_run_manifest(out: &Path, command: &str, inputs: &[(&str, &Path)], s: &Settings) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut text = format!("# mothtrap {command}\n");
    for (name, path) in inputs {
        let _ = writeln!(text, "# {name}: {}", path.display());
    }
    text.push_str(&s.to_config());
    fs::write(out.join("manifest.conf"), text)?;
    Ok(())
}

fn synth(s: &Settings, out: &Path) -> Result<()> {
    s.scene.validate()?;
    write_run_manifest(out, "synth", &[], s)?;
    let files = generate_dataset(&s.scene, s.split_counts, out)?;
    let total: usize = s.split_counts.iter().sum();
    info!("wrote {total} images under {}", out.display());
    for f in &files.annotations {
        println!("{}", f.display());
    }
    Ok(())
}

fn load_split(data: &Path, name: &str) -> Result<Vec<AnnotatedImage>> {
    let path = data.join(format!("{name}.csv"));
    load_corrected(&path).with_context(|| format!("loading {}", path.display()))
}

fn extract(s: &Settings, data: &Path, out: &Path, edges: bool) -> Result<()> {
    let (tr, va) = (load_split(data, "train")?, load_split(data, "val")?);
    let plan = extract_patches(&tr, &va, s)?;
    write_run_manifest(out, "extract", &[("data", data)], s)?;
    if edges {
        let dir = out.join("edges");
        fs::create_dir_all(&dir)?;
        for img in &tr {
            let map = canny_edges(&img.image, s.canny_low, s.canny_high);
            let path = dir.join(overlay_name(&img.path));
            map.to_gray()
                .save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    write_manifest(&out.join("train_patches.csv"), &plan.train, &tr)?;
    write_manifest(&out.join("val_patches.csv"), &plan.val, &va)?;
    for (name, set) in [("training", &plan.train), ("validation", &plan.val)] {
        println!(
            "{name}: {} moth, {} background patches",
            set.count(Label::Moth),
            set.count(Label::Background)
        );
    }
    Ok(())
}

fn train(s: &Settings, data: &Path, patches: Option<&Path>, out: &Path) -> Result<()> {
    let (tr, va) = (load_split(data, "train")?, load_split(data, "val")?);
    let plan = match patches {
        Some(dir) => {
            let train = read_manifest(&dir.join("train_patches.csv"), &tr)?;
            let val = read_manifest(&dir.join("val_patches.csv"), &va)?;
            let used: BTreeSet<usize> = train.records.iter().map(|r| r.image).collect();
            if train.records.iter().any(|r| r.side != s.patch_size) {
                bail!("manifest patch side differs from patch_size = {}", s.patch_size);
            }
            PatchPlan {
                train,
                val,
                train_images: used.into_iter().collect(),
            }
        }
        None => extract_patches(&tr, &va, s)?,
    };
    let mut inputs = vec![("data", data)];
    if let Some(p) = patches {
        inputs.push(("patches", p));
    }
    write_run_manifest(out, "train", &inputs, s)?;
    let det = train_from_plan(&tr, &va, plan, s)?;
    checkpoint::save(&det.net, &out.join("model.ckpt"))?;
    write_history(&out.join("history.csv"), &det.history)?;
    let mut stages = String::from("stage,train_positives,train_negatives,val_positives,val_negatives\n");
    for (k, c) in det.stages.iter().enumerate() {
        let _ = writeln!(
            stages,
            "{},{},{},{},{}",
            k + 1,
            c.train_positives,
            c.train_negatives,
            c.val_positives,
            c.val_negatives
        );
    }
    fs::write(out.join("stages.csv"), stages)?;
    if let Some(last) = det.history.last() {
        println!(
            "stage {} epoch {}: validation accuracy {:.4}",
            last.stage, last.stats.epoch, last.stats.val_accuracy
        );
    }
    println!("{}", out.join("model.ckpt").display());
    Ok(())
}

fn load_model(path: &Path, s: &mut Settings) -> Result<Network<f64>> {
    let net: Network<f64> =
        checkpoint::load(path).with_context(|| format!("loading model {}", path.display()))?;
    s.set("patch_size", &net.input_side().to_string())?;
    Ok(net)
}

fn bootstrap(mut s: Settings, model: &Path, annotations: &Path, out: &Path) -> Result<()> {
    let net = load_model(model, &mut s)?;
    let images = load_corrected(annotations).with_context(|| format!("loading {}", annotations.display()))?;
    let idx: Vec<usize> = (0..images.len()).collect();
    write_run_manifest(out, "bootstrap", &[("model", model), ("annotations", annotations)], &s)?;
    let (set, rep) = bootstrap_negatives(&net, &images, &idx, &s.detector_config(), s.bootstrap_cap)?;
    write_manifest(&out.join("hard_negatives.csv"), &set, &images)?;
    let opt = |v: Option<f64>| v.map(|p| format!("{p:.6}")).unwrap_or_default();
    let summary = format!(
        "metric,value\nfalse_positives,{}\nreturned,{}\nmin_returned_probability,{}\nmax_excluded_probability,{}\n",
        rep.false_positives,
        rep.returned,
        opt(rep.min_returned_probability),
        opt(rep.max_excluded_probability)
    );
    fs::write(out.join("bootstrap.csv"), summary)?;
    println!("{} of {} false positives kept", rep.returned, rep.false_positives);
    Ok(())
}

/// An input image with its label in output files and any ground truth.
struct InputImage {
    name: String,
    file: PathBuf,
    boxes: Vec<mothtrap::imaging::BoundingBox>,
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn list_inputs(images: &Path) -> Result<Vec<InputImage>> {
    if images.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(images)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file() && is_image(p));
        files.sort();
        if files.is_empty() {
            bail!("no PNG or JPEG images in {}", images.display());
        }
        return Ok(files
            .into_iter()
            .map(|f| InputImage {
                name: f.display().to_string(),
                file: f,
                boxes: Vec::new(),
            })
            .collect());
    }
    if is_image(images) {
        return Ok(vec![InputImage {
            name: images.display().to_string(),
            file: images.to_path_buf(),
            boxes: Vec::new(),
        }]);
    }
    let entries = read_annotations(images)?;
    Ok(entries
        .into_iter()
        .map(|e| InputImage {
            file: mothtrap::dataset::resolve_image_path(images, &e.path),
            name: e.path,
            boxes: e.boxes,
        })
        .collect())
}

fn overlay_name(name: &str) -> String {
    let stem = Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| name.to_string());
    format!("{stem}.png")
}

fn detect(mut s: Settings, model: &Path, images: &Path, overlay: bool, out: &Path) -> Result<()> {
    let net = load_model(model, &mut s)?;
    let cfg = s.detector_config();
    cfg.validate()?;
    let inputs = list_inputs(images)?;
    write_run_manifest(out, "detect", &[("model", model), ("images", images)], &s)?;
    if overlay {
        fs::create_dir_all(out.join("overlays"))?;
    }
    let mut all = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let img = load_image(&input.file)?;
        let dets = detector::detect(&img, &net, &cfg)?;
        info!("{}: {} detections", input.name, dets.len());
        if overlay {
            let drawn = detector::overlay(&img, &input.boxes, &dets);
            save_png(&drawn, &out.join("overlays").join(overlay_name(&input.name)))?;
        }
        all.push(dets);
    }
    let path = out.join("detections.csv");
    write_detections(
        &path,
        inputs.iter().map(|i| i.name.as_str()).zip(all.iter().map(Vec::as_slice)),
    )?;
    let total: usize = all.iter().map(Vec::len).sum();
    println!("{total} detections in {} images -> {}", inputs.len(), path.display());
    Ok(())
}

/// Groups detections by annotated image. Paths are matched exactly first,
/// then by file name.
fn score(entries: &[AnnotationEntry], dets: Vec<(String, Detection)>, source: &Path) -> Result<Vec<ScoredImage>> {
    let exact: HashMap<&str, usize> = entries.iter().enumerate().map(|(i, e)| (e.path.as_str(), i)).collect();
    let mut by_name: HashMap<String, Option<usize>> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        let name = file_name(&e.path);
        by_name
            .entry(name)
            .and_modify(|v| *v = None)
            .or_insert(Some(i));
    }
    let mut scored: Vec<ScoredImage> = entries
        .iter()
        .map(|e| ScoredImage {
            ground_truth: e.boxes.clone(),
            detections: Vec::new(),
        })
        .collect();
    for (path, d) in dets {
        let idx = exact
            .get(path.as_str())
            .copied()
            .or_else(|| by_name.get(&file_name(&path)).copied().flatten())
            .with_context(|| format!("{}: image {path:?} is not in the annotations", source.display()))?;
        scored[idx].detections.push(d);
    }
    Ok(scored)
}

fn file_name(path: &str) -> String {
    Path::new(path)
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| path.to_string())
}

fn evaluate_file(annotations: &Path, detections: &Path) -> Result<(Vec<AnnotationEntry>, Vec<ScoredImage>, EvalReport)> {
    let entries = read_annotations(annotations)?;
    let dets = read_detections(detections)?;
    let scored = score(&entries, dets, detections)?;
    let report = sweep(&scored)?;
    Ok((entries, scored, report))
}

fn print_summary(report: &EvalReport, level: Level) {
    for (k, v) in summary_rows(report, level) {
        println!("{k:<26} {}", if v.is_empty() { "undefined" } else { &v });
    }
}

fn evaluate(s: &Settings, annotations: &Path, detections: &Path, level: Level, out: &Path) -> Result<()> {
    let (_, _, report) = evaluate_file(annotations, detections)?;
    write_run_manifest(out, "evaluate", &[("annotations", annotations), ("detections", detections)], s)?;
    write_curves(&out.join("curves.csv"), &report, level)?;
    write_summary(&out.join("summary.csv"), &report, level)?;
    write_svg(&out.join("curves.svg"), &[("detector", &report)], level)?;
    print_summary(&report, level);
    Ok(())
}

fn parse_runs(runs: &[String], root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if runs.is_empty() {
        return Ok(vec![("detector".into(), root.join("detect/detections.csv"))]);
    }
    let mut out: Vec<(String, PathBuf)> = Vec::new();
    for r in runs {
        let (name, path) = r
            .split_once('=')
            .with_context(|| format!("--run expects NAME=FILE, got {r:?}"))?;
        if name.is_empty() || name.contains(',') || out.iter().any(|(n, _)| n == name) {
            bail!("run names must be unique, nonempty and comma-free: {name:?}");
        }
        out.push((name.to_string(), PathBuf::from(path)));
    }
    Ok(out)
}

fn report(
    s: &Settings,
    annotations: &Path,
    runs: &[(String, PathBuf)],
    level: Level,
    overlay: bool,
    out: &Path,
) -> Result<()> {
    let mut inputs: Vec<(&str, &Path)> = vec![("annotations", annotations)];
    inputs.extend(runs.iter().map(|(n, p)| (n.as_str(), p.as_path())));
    write_run_manifest(out, "report", &inputs, s)?;
    let mut results = Vec::new();
    for (name, path) in runs {
        let (entries, scored, report) = evaluate_file(annotations, path)?;
        results.push((name.as_str(), entries, scored, report));
    }

    let mut table = String::from("run");
    if let Some((_, _, _, r)) = results.first() {
        for (k, _) in summary_rows(r, level) {
            table.push(',');
            table.push_str(k);
        }
    }
    table.push('\n');
    for (name, _, _, r) in &results {
        table.push_str(name);
        for (_, v) in summary_rows(r, level) {
            table.push(',');
            table.push_str(&v);
        }
        table.push('\n');
    }
    fs::write(out.join("comparison.csv"), &table)?;
    let labelled: Vec<(&str, &EvalReport)> = results.iter().map(|(n, _, _, r)| (*n, r)).collect();
    write_svg(&out.join("curves.svg"), &labelled, level)?;
    print!("{table}");

    if overlay {
        let images = load_dataset(annotations)?;
        for (name, _, scored, r) in &results {
            let best = if level.object() { r.best_object_f2() } else { r.best_image_f2() };
            let Some(t) = best.map(|p| p.threshold) else {
                continue;
            };
            let dir = out.join("overlays").join(name);
            fs::create_dir_all(&dir)?;
            for (img, sc) in images.iter().zip(scored) {
                let kept = detector::threshold_detections(&sc.detections, t)?;
                let drawn = detector::overlay(&img.image, &img.boxes, &kept);
                save_png(&drawn, &dir.join(overlay_name(&img.path)))?;
            }
            info!("{name}: overlays at threshold {t:.4} in {}", dir.display());
        }
    }
    Ok(())
}

fn run_repro(s: &Settings, out: &Path) -> Result<()> {
    let result = repro(s, out)?;
    print_summary(&result.report, Level::Both);
    println!("{}", result.outputs.summary.display());
    Ok(())
}
