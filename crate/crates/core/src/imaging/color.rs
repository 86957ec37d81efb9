use super::Image;

/// Mean of each RGB channel.
pub fn channel_means(img: &Image) -> [f64; 3] {
    let mut sums = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sums[c] += u64::from(p.0[c]);
        }
    }
    let n = (img.width() as u64 * img.height() as u64).max(1) as f64;
    sums.map(|s| s as f64 / n)
}

/// Grey-world white balance: red and blue are scaled by `μ_green / μ_red`
/// and `μ_green / μ_blue` so all channel means match green. Results are
/// rounded and clamped to `[0, 255]`. A channel with zero mean, or an image
/// whose green mean is zero, is left unchanged.
pub fn grey_world_correct(img: &Image) -> Image {
    let [mr, mg, mb] = channel_means(img);
    let gain = |m: f64| if m > 0.0 && mg > 0.0 { mg / m } else { 1.0 };
    let gains = [gain(mr), 1.0, gain(mb)];
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in [0usize, 2] {
            if gains[c] != 1.0 {
                let v = (f64::from(p.0[c]) * gains[c]).round_ties_even();
                p.0[c] = v.clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn balanced_and_grey_images_unchanged() {
        let grey = Image::from_fn(7, 5, |x, y| {
            let v = (x * 30 + y * 7) as u8;
            Rgb([v, v, v])
        });
        assert_eq!(grey_world_correct(&grey), grey);
        let balanced = Image::from_fn(2, 1, |x, _| if x == 0 { Rgb([10, 20, 30]) } else { Rgb([30, 20, 10]) });
        assert_eq!(grey_world_correct(&balanced), balanced);
    }

    #[test]
    fn tinted_means_are_equalized() {
        // Two pixels per channel averaging (120, 100, 80).
        let img = Image::from_fn(2, 1, |x, _| {
            if x == 0 {
                Rgb([110, 90, 70])
            } else {
                Rgb([130, 110, 90])
            }
        });
        let out = grey_world_correct(&img);
        let m = channel_means(&out);
        for c in m {
            assert!((c - 100.0).abs() <= 1.0, "{m:?}");
        }
        assert_eq!(out.get_pixel(0, 0).0[1], 90);
    }

    #[test]
    fn zero_channel_left_alone() {
        let img = Image::from_pixel(3, 3, Rgb([0, 50, 200]));
        let out = grey_world_correct(&img);
        assert_eq!(out.get_pixel(1, 1).0, [0, 50, 50]);
    }
}
