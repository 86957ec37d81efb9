use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

use super::{Image, Point};

pub const CHANNELS: usize = 3;

/// Square RGB crop, stored row-major as interleaved 8-bit triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    side: usize,
    data: Vec<u8>,
}

impl Patch {
    pub fn new(side: usize, data: Vec<u8>) -> Result<Self> {
        if side == 0 || data.len() != side * side * CHANNELS {
            return Err(Error::Dimension(format!(
                "patch of side {side} needs {} bytes, got {}",
                side * side * CHANNELS,
                data.len()
            )));
        }
        Ok(Self { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        CHANNELS
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.side + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn remap(&self, f: impl Fn(usize, usize, usize) -> (usize, usize)) -> Self {
        let n = self.side;
        let mut data = vec![0u8; self.data.len()];
        for y in 0..n {
            for x in 0..n {
                let (sx, sy) = f(x, y, n);
                let src = (sy * n + sx) * CHANNELS;
                let dst = (y * n + x) * CHANNELS;
                data[dst..dst + CHANNELS].copy_from_slice(&self.data[src..src + CHANNELS]);
            }
        }
        Self { side: n, data }
    }

    /// Rotation by 90° counter-clockwise.
    pub fn rotate90(&self) -> Self {
        self.remap(|x, y, n| (n - 1 - y, x))
    }

    /// Rotation by `quarter_turns × 90°` counter-clockwise.
    pub fn rotate(&self, quarter_turns: usize) -> Self {
        match quarter_turns % 4 {
            0 => self.clone(),
            1 => self.rotate90(),
            2 => self.remap(|x, y, n| (n - 1 - x, n - 1 - y)),
            _ => self.remap(|x, y, n| (y, n - 1 - x)),
        }
    }

    /// Mirror across the vertical axis (left ↔ right).
    pub fn flip_horizontal(&self) -> Self {
        self.remap(|x, y, n| (n - 1 - x, y))
    }

    /// Classifier input: channel-major (`3 × side × side`) raw intensities.
    pub fn to_input<T: Scalar>(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.data.len()];
        self.write_input(&mut out);
        out
    }

    pub fn write_input<T: Scalar>(&self, out: &mut [T]) {
        let plane = self.side * self.side;
        for (i, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                out[c * plane + i] = lit(f64::from(px[c]));
            }
        }
    }
}

/// Top-left corner of the `side × side` window centred at `center`, shifted
/// the minimum amount needed to lie inside a `width × height` image.
pub fn window_origin(width: u32, height: u32, center: Point, side: usize) -> Result<(u32, u32)> {
    let s = side as i64;
    if side == 0 || s > i64::from(width) || s > i64::from(height) {
        return Err(Error::Extraction(format!(
            "{side}x{side} window does not fit a {width}x{height} image"
        )));
    }
    let half = s / 2;
    let x0 = (center.x - half).clamp(0, i64::from(width) - s);
    let y0 = (center.y - half).clamp(0, i64::from(height) - s);
    Ok((x0 as u32, y0 as u32))
}

/// Crops the `side × side` window centred at `center`; windows crossing the
/// border are shifted inside rather than padded.
pub fn extract_square_patch(img: &Image, center: Point, side: usize) -> Result<Patch> {
    let (x0, y0) = window_origin(img.width(), img.height(), center, side)?;
    Ok(crop(img, x0, y0, side))
}

/// Crops the window with top-left `(x0, y0)`; the caller guarantees it fits.
fn crop(img: &Image, x0: u32, y0: u32, side: usize) -> Patch {
    let raw = img.as_raw();
    let stride = img.width() as usize * CHANNELS;
    let mut data = Vec::with_capacity(side * side * CHANNELS);
    for y in 0..side {
        let start = (y0 as usize + y) * stride + x0 as usize * CHANNELS;
        data.extend_from_slice(&raw[start..start + side * CHANNELS]);
    }
    Patch { side, data }
}

/// Writes the classifier input for a window directly from the image.
pub(crate) fn write_window_input<T: Scalar>(img: &Image, x0: u32, y0: u32, side: usize, out: &mut [T]) {
    let raw = img.as_raw();
    let stride = img.width() as usize * CHANNELS;
    let plane = side * side;
    for y in 0..side {
        let start = (y0 as usize + y) * stride + x0 as usize * CHANNELS;
        for x in 0..side {
            for c in 0..CHANNELS {
                out[c * plane + y * side + x] = lit(f64::from(raw[start + x * CHANNELS + c]));
            }
        }
    }
}
