//! Canny edge detection on the luminance channel.
//!
//! The pipeline runs in exact integer arithmetic up to the final threshold
//! comparison: luminance is `299R + 587G + 114B` (scaled by 1000), smoothing
//! uses the 5×5 integer Gaussian for σ = 1.4 (weights sum to 159), and Sobel
//! responses are exact integers. Borders replicate the nearest pixel.
//! Gradient magnitudes are compared against thresholds on the usual 0–255
//! Sobel-magnitude scale.

use image::{GrayImage, Luma};

use super::Image;

const LUMA_SCALE: i64 = 1000;
const GAUSS_NORM: i64 = 159;
const GAUSS_5X5: [[i64; 5]; 5] = [
    [2, 4, 5, 4, 2],
    [4, 9, 12, 9, 4],
    [5, 12, 15, 12, 5],
    [4, 9, 12, 9, 4],
    [2, 4, 5, 4, 2],
];

pub const DEFAULT_LOW: f64 = 50.0;
pub const DEFAULT_HIGH: f64 = 100.0;

/// Binary per-pixel edge map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    width: u32,
    height: u32,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.edges[(y * self.width + x) as usize]
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|e| **e).count()
    }

    pub fn iter_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| **e)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Summed-area table over edge pixels, `(width + 1) × (height + 1)`.
    pub fn integral(&self) -> Vec<u32> {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut s = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from(self.edges[y * w + x]);
                s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
            }
        }
        s
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }
}

/// Edge-pixel count of the window `[x0, x0 + w) × [y0, y0 + h)` from an
/// integral image produced by [`EdgeMap::integral`].
pub fn window_count(integral: &[u32], width: u32, x0: u32, y0: u32, w: u32, h: u32) -> u32 {
    let stride = width as usize + 1;
    let at = |x: u32, y: u32| integral[y as usize * stride + x as usize];
    at(x0 + w, y0 + h) + at(x0, y0) - at(x0 + w, y0) - at(x0, y0 + h)
}

fn clamp_idx(v: i64, n: usize) -> usize {
    v.clamp(0, n as i64 - 1) as usize
}

/// Standard Canny: Gaussian smoothing, Sobel gradients, non-maximum
/// suppression along the quantized gradient direction and double-threshold
/// hysteresis with 8-connectivity.
pub fn canny_edges(img: &Image, low: f64, high: f64) -> EdgeMap {
    assert!(0.0 <= low && low <= high, "canny thresholds need 0 <= low <= high");
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return EdgeMap {
            width: img.width(),
            height: img.height(),
            edges: Vec::new(),
        };
    }
    let luma: Vec<i64> = img
        .pixels()
        .map(|p| 299 * i64::from(p.0[0]) + 587 * i64::from(p.0[1]) + 114 * i64::from(p.0[2]))
        .collect();

    let mut smooth = vec![0i64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0;
            for (i, row) in GAUSS_5X5.iter().enumerate() {
                let yy = clamp_idx(y as i64 + i as i64 - 2, h);
                for (j, k) in row.iter().enumerate() {
                    let xx = clamp_idx(x as i64 + j as i64 - 2, w);
                    acc += k * luma[yy * w + xx];
                }
            }
            smooth[y * w + x] = acc;
        }
    }

    let at = |x: i64, y: i64| smooth[clamp_idx(y, h) * w + clamp_idx(x, w)];
    let mut gx = vec![0i64; w * h];
    let mut gy = vec![0i64; w * h];
    let mut mag2 = vec![0i64; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let dx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            // |dx|, |dy| < 2^33, squares fit comfortably in i64
            mag2[i] = dx * dx + dy * dy;
        }
    }

    // Non-maximum suppression. Directions are binned at 22.5° boundaries
    // (tan 22.5° ≈ 0.41421). A pixel survives if it is >= its neighbour on the
    // negative side and > its neighbour on the positive side, which thins
    // symmetric plateaus to one pixel.
    let m2 = |x: i64, y: i64| -> i64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            0
        } else {
            mag2[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0i64; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let m = mag2[i];
            if m == 0 {
                continue;
            }
            let (dx, dy) = (gx[i], gy[i]);
            let (ax, ay) = (dx.abs(), dy.abs());
            let ((nx, ny), (px, py)) = if ay * 100_000 <= ax * 41_421 {
                ((x - 1, y), (x + 1, y))
            } else if ax * 100_000 <= ay * 41_421 {
                ((x, y - 1), (x, y + 1))
            } else if (dx > 0) == (dy > 0) {
                ((x - 1, y - 1), (x + 1, y + 1))
            } else {
                ((x + 1, y - 1), (x - 1, y + 1))
            };
            if m >= m2(nx, ny) && m > m2(px, py) {
                thin[i] = m;
            }
        }
    }

    let scale = (LUMA_SCALE * GAUSS_NORM) as f64;
    let low2 = (low * scale).powi(2);
    let high2 = (high * scale).powi(2);
    let mut edges = vec![false; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if edges[start] || thin[start] == 0 || (thin[start] as f64) < high2 {
            continue;
        }
        edges[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (xx, yy) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                        continue;
                    }
                    let j = yy as usize * w + xx as usize;
                    if !edges[j] && thin[j] > 0 && thin[j] as f64 >= low2 {
                        edges[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    EdgeMap {
        width: img.width(),
        height: img.height(),
        edges,
    }
}
