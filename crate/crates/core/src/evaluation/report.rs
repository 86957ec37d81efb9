use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::sweep::{CurvePoint, EvalReport};
use crate::error::{Error, Result};

/// Which metric families a report includes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Level {
    Object,
    Image,
    #[default]
    Both,
}

impl Level {
    pub fn object(self) -> bool {
        self != Level::Image
    }

    pub fn image(self) -> bool {
        self != Level::Object
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "object" => Ok(Level::Object),
            "image" => Ok(Level::Image),
            "both" => Ok(Level::Both),
            other => Err(Error::Config(format!("unknown level {other:?} (object, image, both)"))),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Object => "object",
            Level::Image => "image",
            Level::Both => "both",
        })
    }
}

pub const CURVE_HEADER: [&str; 10] = [
    "threshold",
    "miss_rate",
    "fppi",
    "precision",
    "recall",
    "f2",
    "img_sensitivity",
    "img_specificity",
    "img_precision",
    "img_f2",
];

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Whether curve column `k` belongs to `level`.
fn curve_column(level: Level, k: usize) -> bool {
    match k {
        0 => true,
        1..=5 => level.object(),
        _ => level.image(),
    }
}

fn curve_row(p: &CurvePoint) -> [String; 10] {
    [
        num(p.threshold),
        opt(p.object.miss_rate),
        num(p.object.fppi),
        num(p.object.precision),
        opt(p.object.recall),
        opt(p.object.f2),
        opt(p.image.sensitivity),
        opt(p.image.specificity),
        num(p.image.precision),
        opt(p.image.f2),
    ]
}

fn select<T: AsRef<str>>(level: Level, fields: &[T]) -> String {
    fields
        .iter()
        .enumerate()
        .filter(|(k, _)| curve_column(level, *k))
        .map(|(_, f)| f.as_ref())
        .collect::<Vec<_>>()
        .join(",")
}

/// One row per curve point; undefined metrics are left empty.
pub fn curves_csv(report: &EvalReport, level: Level) -> String {
    let mut s = select(level, &CURVE_HEADER);
    s.push('\n');
    for p in &report.points {
        s.push_str(&select(level, &curve_row(p)));
        s.push('\n');
    }
    s
}

/// `metric,value` rows: the four scalar summaries, then the F2 maxima and
/// their thresholds.
pub fn summary_csv(report: &EvalReport, level: Level) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in summary_rows(report, level) {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

/// The summary as `(metric, formatted value)` pairs.
pub fn summary_rows(report: &EvalReport, level: Level) -> Vec<(&'static str, String)> {
    let best_o = report.best_object_f2();
    let best_i = report.best_image_f2();
    let mut rows = Vec::new();
    if level.object() {
        rows.push(("object_pr_auc", opt(report.object_pr_auc)));
        rows.push(("log_avg_miss_rate", opt(report.log_avg_miss_rate)));
    }
    if level.image() {
        rows.push(("image_pr_auc", opt(report.image_pr_auc)));
        rows.push(("image_sens_spec_auc", opt(report.image_sens_spec_auc)));
    }
    if level.object() {
        rows.push(("best_object_f2", opt(best_o.and_then(|p| p.object.f2))));
        rows.push(("best_object_f2_threshold", opt(best_o.map(|p| p.threshold))));
    }
    if level.image() {
        rows.push(("best_image_f2", opt(best_i.and_then(|p| p.image.f2))));
        rows.push(("best_image_f2_threshold", opt(best_i.map(|p| p.threshold))));
    }
    rows
}

pub fn write_curves(path: &Path, report: &EvalReport, level: Level) -> Result<()> {
    Ok(fs::write(path, curves_csv(report, level))?)
}

pub fn write_summary(path: &Path, report: &EvalReport, level: Level) -> Result<()> {
    Ok(fs::write(path, summary_csv(report, level))?)
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Panel {
    title: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    log_x: bool,
    x_range: (f64, f64),
    series: fn(&CurvePoint) -> Option<(f64, f64)>,
}

fn panels() -> [Panel; 6] {
    [
        Panel {
            title: "miss rate vs FPPI (object)",
            x_label: "FPPI",
            y_label: "miss rate",
            log_x: true,
            x_range: (0.01, 100.0),
            series: |p| Some((p.object.fppi, p.object.miss_rate?)),
        },
        Panel {
            title: "precision vs recall (object)",
            x_label: "recall",
            y_label: "precision",
            log_x: false,
            x_range: (0.0, 1.0),
            series: |p| Some((p.object.recall?, p.object.precision)),
        },
        Panel {
            title: "F2 vs threshold (object)",
            x_label: "threshold",
            y_label: "F2",
            log_x: false,
            x_range: (0.0, 1.0),
            series: |p| Some((p.threshold, p.object.f2?)),
        },
        Panel {
            title: "sensitivity vs specificity (image)",
            x_label: "specificity",
            y_label: "sensitivity",
            log_x: false,
            x_range: (0.0, 1.0),
            series: |p| Some((p.image.specificity?, p.image.sensitivity?)),
        },
        Panel {
            title: "precision vs recall (image)",
            x_label: "recall",
            y_label: "precision",
            log_x: false,
            x_range: (0.0, 1.0),
            series: |p| Some((p.image.sensitivity?, p.image.precision)),
        },
        Panel {
            title: "F2 vs threshold (image)",
            x_label: "threshold",
            y_label: "F2",
            log_x: false,
            x_range: (0.0, 1.0),
            series: |p| Some((p.threshold, p.image.f2?)),
        },
    ]
}

/// Line-plot panels, three per level (object row above image row), one
/// line per labelled report.
pub fn curves_svg(reports: &[(&str, &EvalReport)], level: Level) -> String {
    let all = panels();
    let chosen: Vec<&Panel> = all
        .iter()
        .enumerate()
        .filter(|(k, _)| if *k < 3 { level.object() } else { level.image() })
        .map(|(_, p)| p)
        .collect();
    let rows = chosen.len().div_ceil(3) as f64;
    let width = 3.0 * (PANEL_W + 2.0 * MARGIN);
    let height = rows * (PANEL_H + 2.0 * MARGIN) + 20.0 * reports.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in chosen.into_iter().enumerate() {
        let ox = (k % 3) as f64 * (PANEL_W + 2.0 * MARGIN) + MARGIN;
        let oy = (k / 3) as f64 * (PANEL_H + 2.0 * MARGIN) + MARGIN;
        let tx = |x: f64| {
            let (lo, hi) = panel.x_range;
            let f = if panel.log_x {
                (x.max(lo).ln() - lo.ln()) / (hi.ln() - lo.ln())
            } else {
                (x - lo) / (hi - lo)
            };
            ox + f.clamp(0.0, 1.0) * PANEL_W
        };
        let ty = |y: f64| oy + (1.0 - y.clamp(0.0, 1.0)) * PANEL_H;
        let _ = writeln!(
            s,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 8.0,
            panel.title
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 28.0,
            panel.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
            ox - 26.0,
            oy + PANEL_H / 2.0,
            ox - 26.0,
            oy + PANEL_H / 2.0,
            panel.y_label
        );
        let ticks: Vec<f64> = if panel.log_x {
            vec![0.01, 0.1, 1.0, 10.0, 100.0]
        } else {
            vec![0.0, 0.5, 1.0]
        };
        for t in ticks {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#,
                tx(t),
                oy + PANEL_H + 14.0
            );
        }
        for (r, (_, report)) in reports.iter().enumerate() {
            let pts: Vec<String> = report
                .points
                .iter()
                .filter_map(panel.series)
                .map(|(x, y)| format!("{:.2},{:.2}", tx(x), ty(y)))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                COLORS[r % COLORS.len()],
                pts.join(" ")
            );
        }
    }
    let ly = rows * (PANEL_H + 2.0 * MARGIN);
    for (r, (label, _)) in reports.iter().enumerate() {
        let y = ly + 20.0 * r as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            MARGIN + 24.0,
            COLORS[r % COLORS.len()],
            MARGIN + 30.0,
            y + 4.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, reports: &[(&str, &EvalReport)], level: Level) -> Result<()> {
    Ok(fs::write(path, curves_svg(reports, level))?)
}
