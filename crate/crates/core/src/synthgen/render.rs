use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::config::{Range, SceneConfig};
use crate::imaging::{BoundingBox, Image};

type Rgb = [f32; 3];

pub(crate) fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut ChaCha8Rng, r: Range) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..=r.1)
    } else {
        r.0
    }
}

pub(crate) fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // mean is finite and positive here
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as usize)
}

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn set(&mut self, x: i64, y: i64, c: Rgb) -> bool {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            return false;
        }
        self.px[y as usize * self.w + x as usize] = c;
        true
    }
}

/// Pixels whose centres fall inside a rotated ellipse.
fn ellipse_pixels(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Vec<(i64, i64, f64)> {
    let (s, c) = theta.sin_cos();
    let r = a.max(b).ceil() as i64 + 1;
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    let mut out = Vec::new();
    for y in y0 - r..=y0 + r {
        for x in x0 - r..=x0 + r {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            if u * u + v * v <= 1.0 {
                out.push((x, y, u));
            }
        }
    }
    out
}

fn jitter(rng: &mut ChaCha8Rng, base: Rgb, spread: Range) -> Rgb {
    let f = uniform(rng, spread) as f32;
    let hue = [
        rng.random_range(-6.0..=6.0f32),
        rng.random_range(-6.0..=6.0f32),
        rng.random_range(-6.0..=6.0f32),
    ];
    [base[0] * f + hue[0], base[1] * f + hue[1], base[2] * f + hue[2]]
}

fn background(cfg: &SceneConfig, rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    const CELL: usize = 32;
    let gw = canvas.w / CELL + 2;
    let gh = canvas.h / CELL + 2;
    let amp = cfg.texture_amplitude;
    let grid: Vec<f64> = (0..gw * gh)
        .map(|_| if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 })
        .collect();
    let liner: Rgb = [1.0, 0.98, 0.9].map(|f| f * cfg.liner_level as f32);
    for y in 0..canvas.h {
        for x in 0..canvas.w {
            let (gx, gy) = (x / CELL, y / CELL);
            let (fx, fy) = ((x % CELL) as f64 / CELL as f64, (y % CELL) as f64 / CELL as f64);
            let v = grid[gy * gw + gx] * (1.0 - fx) * (1.0 - fy)
                + grid[gy * gw + gx + 1] * fx * (1.0 - fy)
                + grid[(gy + 1) * gw + gx] * (1.0 - fx) * fy
                + grid[(gy + 1) * gw + gx + 1] * fx * fy;
            canvas.px[y * canvas.w + x] = liner.map(|c| c + v as f32);
        }
    }
    for _ in 0..cfg.specks {
        let x = rng.random_range(0..canvas.w as i64);
        let y = rng.random_range(0..canvas.h as i64);
        let d = rng.random_range(30.0..=70.0f32);
        let c = canvas.px[y as usize * canvas.w + x as usize].map(|v| v - d);
        canvas.set(x, y, c);
        if rng.random_bool(0.3) {
            canvas.set(x + 1, y, c);
        }
    }
}

/// Returns the lure centre and radius when drawn.
fn lure(cfg: &SceneConfig, rng: &mut ChaCha8Rng, canvas: &mut Canvas) -> Option<(f64, f64, f64)> {
    if !rng.random_bool(cfg.lure_probability) {
        return None;
    }
    let r = uniform(rng, cfg.lure_radius);
    let cx = canvas.w as f64 / 2.0 + rng.random_range(-30.0..=30.0);
    let cy = canvas.h as f64 / 2.0 + rng.random_range(-30.0..=30.0);
    let outer = jitter(rng, [150.0, 62.0, 48.0], (0.85, 1.1));
    let inner = jitter(rng, [195.0, 128.0, 104.0], (0.9, 1.05));
    for (x, y, _) in ellipse_pixels(cx, cy, r, r, 0.0) {
        canvas.set(x, y, outer);
    }
    for (x, y, _) in ellipse_pixels(cx, cy, r * 0.55, r * 0.55, 0.0) {
        canvas.set(x, y, inner);
    }
    Some((cx, cy, r))
}

fn leaf(rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let cx = rng.random_range(0.0..canvas.w as f64);
    let cy = rng.random_range(0.0..canvas.h as f64);
    let r = rng.random_range(8.0..=18.0);
    let n = rng.random_range(5..=8);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    let stretch = rng.random_range(1.0..=2.2);
    let rot = rng.random_range(0.0..std::f64::consts::PI);
    let (s, c) = rot.sin_cos();
    let poly: Vec<(f64, f64)> = angles
        .iter()
        .map(|&t| {
            let rr = r * rng.random_range(0.6..=1.0);
            let (u, v) = (rr * stretch * t.cos(), rr * t.sin());
            (cx + u * c - v * s, cy + u * s + v * c)
        })
        .collect();
    let color = jitter(rng, [95.0, 118.0, 58.0], (0.8, 1.15));
    let reach = (r * stretch).ceil() as i64 + 1;
    for y in cy as i64 - reach..=cy as i64 + reach {
        for x in cx as i64 - reach..=cx as i64 + reach {
            if inside_polygon(&poly, x as f64, y as f64) {
                canvas.set(x, y, color);
            }
        }
    }
}

fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn fly(rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let cx = rng.random_range(0.0..canvas.w as f64);
    let cy = rng.random_range(0.0..canvas.h as f64);
    let a = rng.random_range(2.0..=4.0);
    let b = rng.random_range(1.2..=2.2);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let color = jitter(rng, [38.0, 36.0, 40.0], (0.8, 1.2));
    for (x, y, _) in ellipse_pixels(cx, cy, a, b, theta) {
        canvas.set(x, y, color);
    }
    if rng.random_bool(0.6) {
        let wing = jitter(rng, [120.0, 125.0, 130.0], (0.9, 1.1));
        let (s, c) = theta.sin_cos();
        for side in [-1.0, 1.0] {
            let (wx, wy) = (cx - s * side * b * 1.2, cy + c * side * b * 1.2);
            for (x, y, _) in ellipse_pixels(wx, wy, a * 0.7, b * 0.6, theta) {
                canvas.set(x, y, wing);
            }
        }
    }
}

/// Body and wing base colours: dark brown, grey and pale tan moths.
const MOTH_PALETTES: [(Rgb, Rgb); 3] = [
    ([92.0, 68.0, 48.0], [138.0, 112.0, 84.0]),
    ([88.0, 86.0, 84.0], [132.0, 128.0, 122.0]),
    ([140.0, 116.0, 86.0], [170.0, 150.0, 120.0]),
];

/// Near-round blob in a moth colour with a specular highlight.
fn beetle(rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let cx = rng.random_range(0.0..canvas.w as f64);
    let cy = rng.random_range(0.0..canvas.h as f64);
    let r = rng.random_range(3.5..=7.0);
    let b = r * rng.random_range(0.8..=1.0);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let base = MOTH_PALETTES[rng.random_range(0..MOTH_PALETTES.len())].0;
    let color = jitter(rng, base, (0.7, 1.1));
    for (x, y, _) in ellipse_pixels(cx, cy, r, b, theta) {
        canvas.set(x, y, color);
    }
    let (hx, hy) = (cx - r * 0.35, cy - b * 0.35);
    for (x, y, _) in ellipse_pixels(hx, hy, r * 0.3, r * 0.3, 0.0) {
        canvas.set(x, y, color.map(|v| v * 1.5 + 20.0));
    }
}

/// Moth-sized elongated fleck of uniform moth colour.
fn debris(cfg: &SceneConfig, rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let cx = rng.random_range(0.0..canvas.w as f64);
    let cy = rng.random_range(0.0..canvas.h as f64);
    let a = uniform(rng, cfg.body_length) / 2.0;
    let b = uniform(rng, cfg.body_width) / 2.0 * rng.random_range(0.5..=0.9);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let base = MOTH_PALETTES[rng.random_range(0..MOTH_PALETTES.len())].0;
    let color = jitter(rng, base, (0.7, 1.2));
    for (x, y, _) in ellipse_pixels(cx, cy, a, b, theta) {
        canvas.set(x, y, color);
    }
}

/// Soft Gaussian darkening.
fn smudge(rng: &mut ChaCha8Rng, canvas: &mut Canvas) {
    let cx = rng.random_range(0.0..canvas.w as f64);
    let cy = rng.random_range(0.0..canvas.h as f64);
    let sigma = rng.random_range(4.0..=12.0);
    let depth = rng.random_range(0.15..=0.4);
    let r = (3.0 * sigma) as i64;
    for y in cy as i64 - r..=cy as i64 + r {
        for x in cx as i64 - r..=cx as i64 + r {
            if x < 0 || y < 0 || x >= canvas.w as i64 || y >= canvas.h as i64 {
                continue;
            }
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let f = (1.0 - depth * (-d2 / (2.0 * sigma * sigma)).exp()) as f32;
            let p = &mut canvas.px[y as usize * canvas.w + x as usize];
            *p = p.map(|v| v * f);
        }
    }
}

/// Draws one moth and returns its tight box.
fn moth(cfg: &SceneConfig, rng: &mut ChaCha8Rng, canvas: &mut Canvas, lure: Option<(f64, f64, f64)>) -> BoundingBox {
    let a = uniform(rng, cfg.body_length) / 2.0;
    let b = uniform(rng, cfg.body_width) / 2.0;
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let wings = rng.random_bool(cfg.wing_probability);
    let margin = a.max(b * 3.0) + 2.0;
    let (mut cx, mut cy);
    loop {
        cx = rng.random_range(margin..canvas.w as f64 - margin);
        cy = rng.random_range(margin..canvas.h as f64 - margin);
        match lure {
            Some((lx, ly, lr)) if (cx - lx).hypot(cy - ly) < lr + margin => continue,
            _ => break,
        }
    }
    let (body_base, wing_base) = MOTH_PALETTES[rng.random_range(0..MOTH_PALETTES.len())];
    let mut pixels: Vec<(i64, i64)> = Vec::new();
    if wings {
        let (s, c) = theta.sin_cos();
        let wing = jitter(rng, wing_base, (0.85, 1.1));
        let spread = rng.random_range(0.8..=1.4);
        let band = rng.random_bool(0.5).then(|| {
            let lo = rng.random_range(-0.6..=0.2);
            (lo, lo + rng.random_range(0.2..=0.4))
        });
        for side in [-1.0, 1.0] {
            let (wx, wy) = (cx - s * side * b * spread, cy + c * side * b * spread);
            for (x, y, u) in ellipse_pixels(wx, wy, a * 0.75, b * 1.1, theta + side * 0.25) {
                let c = if band.is_some_and(|(lo, hi)| (lo..hi).contains(&u)) { wing.map(|v| v * 0.7) } else { wing };
                canvas.set(x, y, c);
                pixels.push((x, y));
            }
        }
    }
    let body = jitter(rng, body_base, (0.7, 1.2));
    let head_dark = rng.random_range(0.15..=0.35f32);
    for (x, y, u) in ellipse_pixels(cx, cy, a, b, theta) {
        let shade = 1.0 - head_dark * ((u as f32 + 1.0) / 2.0);
        canvas.set(x, y, body.map(|v| v * shade));
        pixels.push((x, y));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &(x, y) in &pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
}

fn gaussian_blur(canvas: &mut Canvas, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32).collect();
    let norm: f32 = k.iter().sum();
    let k: Vec<f32> = k.iter().map(|v| v / norm).collect();
    let (w, h) = (canvas.w as i64, canvas.h as i64);
    for horizontal in [true, false] {
        let src = canvas.px.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f32; 3];
                for (t, kv) in k.iter().enumerate() {
                    let o = t as i64 - r;
                    let (sx, sy) = if horizontal {
                        ((x + o).clamp(0, w - 1), y)
                    } else {
                        (x, (y + o).clamp(0, h - 1))
                    };
                    let p = src[(sy * w + sx) as usize];
                    for c in 0..3 {
                        acc[c] += kv * p[c];
                    }
                }
                canvas.px[(y * w + x) as usize] = acc;
            }
        }
    }
}

/// Renders scene `index` with exactly `moths` moths.
pub(crate) fn render(cfg: &SceneConfig, rng: &mut ChaCha8Rng, moths: usize) -> (Image, Vec<BoundingBox>) {
    let mut canvas = Canvas {
        w: cfg.width as usize,
        h: cfg.height as usize,
        px: vec![[0.0; 3]; cfg.width as usize * cfg.height as usize],
    };
    background(cfg, rng, &mut canvas);
    for _ in 0..poisson(rng, cfg.mean_smudges) {
        smudge(rng, &mut canvas);
    }
    let lure = lure(cfg, rng, &mut canvas);
    for _ in 0..poisson(rng, cfg.mean_leaves) {
        leaf(rng, &mut canvas);
    }
    for _ in 0..poisson(rng, cfg.mean_flies) {
        fly(rng, &mut canvas);
    }
    for _ in 0..poisson(rng, cfg.mean_beetles) {
        beetle(rng, &mut canvas);
    }
    for _ in 0..poisson(rng, cfg.mean_debris) {
        debris(cfg, rng, &mut canvas);
    }
    let boxes: Vec<BoundingBox> = (0..moths).map(|_| moth(cfg, rng, &mut canvas, lure)).collect();
    let gains: Vec<f32> = cfg.tint.iter().map(|r| uniform(rng, *r) as f32).collect();
    for p in &mut canvas.px {
        for c in 0..3 {
            p[c] *= gains[c];
        }
    }
    gaussian_blur(&mut canvas, uniform(rng, cfg.blur_sigma));
    let amp = cfg.noise_amplitude as f32;
    let img = Image::from_fn(cfg.width, cfg.height, |x, y| {
        let p = canvas.px[y as usize * canvas.w + x as usize];
        image::Rgb(std::array::from_fn(|c| {
            let n = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
            (p[c] + n).round().clamp(0.0, 255.0) as u8
        }))
    });
    (img, boxes)
}
