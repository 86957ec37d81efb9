use std::path::Path;

use image::Rgb;

use crate::error::{Error, Result};

use super::{BoundingBox, Image};

pub const GREEN: Rgb<u8> = Rgb([0, 200, 0]);
pub const MAGENTA: Rgb<u8> = Rgb([255, 0, 255]);

/// Loads a PNG or JPEG file as 8-bit RGB.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Draws a one-pixel rectangle outline, clipped to the image.
pub fn draw_box(img: &mut Image, bb: &BoundingBox, color: Rgb<u8>) {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    let (x1, y1) = (bb.right() - 1, bb.bottom() - 1);
    for x in bb.x..=x1 {
        put(x, bb.y);
        put(x, y1);
    }
    for y in bb.y..=y1 {
        put(bb.x, y);
        put(x1, y);
    }
}
