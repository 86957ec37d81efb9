use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::{extract_square_patch, Image, Patch, Point};

/// Translation offsets; index 0 is the unshifted centre.
pub const SHIFTS: [(i64, i64); 9] = [
    (0, 0),
    (-3, 0),
    (3, 0),
    (0, -3),
    (0, 3),
    (-3, -3),
    (3, -3),
    (-3, 3),
    (3, 3),
];

/// Number of dihedral transforms (4 rotations × 2 flip states).
pub const DIHEDRAL: usize = 8;
/// Number of augmented variants of one patch.
pub const NUM_TRANSFORMS: usize = SHIFTS.len() * DIHEDRAL;

/// A geometric transform: a shift of the extraction centre followed by an
/// optional horizontal flip and a counter-clockwise rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transform {
    pub shift: u8,
    pub rotation: u8,
    pub flip: bool,
}

impl Transform {
    pub const IDENTITY: Self = Self {
        shift: 0,
        rotation: 0,
        flip: false,
    };

    /// `id = shift·8 + rotation·2 + flip`.
    pub fn from_id(id: u8) -> Result<Self> {
        if usize::from(id) >= NUM_TRANSFORMS {
            return Err(Error::Config(format!("transform id {id} out of range")));
        }
        Ok(Self {
            shift: id / 8,
            rotation: (id % 8) / 2,
            flip: id % 2 == 1,
        })
    }

    pub fn id(&self) -> u8 {
        self.shift * 8 + self.rotation * 2 + u8::from(self.flip)
    }

    pub fn offset(&self) -> (i64, i64) {
        SHIFTS[usize::from(self.shift)]
    }

    /// Applies the flip/rotation part to an already extracted patch.
    pub fn apply_dihedral(&self, patch: &Patch) -> Patch {
        if self.flip {
            patch.flip_horizontal().rotate(usize::from(self.rotation))
        } else {
            patch.rotate(usize::from(self.rotation))
        }
    }

    /// Extracts at the shifted centre, then flips and rotates.
    pub fn extract(&self, img: &Image, center: Point, side: usize) -> Result<Patch> {
        let (dx, dy) = self.offset();
        let p = extract_square_patch(img, Point::new(center.x + dx, center.y + dy), side)?;
        Ok(self.apply_dihedral(&p))
    }
}

/// Which transform families are used when expanding training patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AugmentMode {
    None,
    Translation,
    Rotation,
    #[default]
    Both,
}

impl AugmentMode {
    pub fn transform_ids(self) -> Vec<u8> {
        let n = NUM_TRANSFORMS as u8;
        match self {
            Self::None => vec![0],
            Self::Translation => (0..SHIFTS.len() as u8).map(|s| s * 8).collect(),
            Self::Rotation => (0..DIHEDRAL as u8).collect(),
            Self::Both => (0..n).collect(),
        }
    }

    pub fn multiplier(self) -> usize {
        self.transform_ids().len()
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "trans" | "translation" => Ok(Self::Translation),
            "rot" | "rotation" => Ok(Self::Rotation),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!("unknown augmentation mode {s:?}"))),
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Translation => "trans",
            Self::Rotation => "rot",
            Self::Both => "both",
        })
    }
}

/// All 72 variants of the patch centred at `center`, ordered by transform id.
pub fn augment_patch(img: &Image, center: Point, side: usize) -> Result<Vec<Patch>> {
    (0..NUM_TRANSFORMS as u8)
        .map(|id| Transform::from_id(id)?.extract(img, center, side))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn noise_image(w: u32, h: u32, seed: u32) -> Image {
        Image::from_fn(w, h, |x, y| {
            let v = (x.wrapping_mul(2654435761) ^ y.wrapping_mul(40503) ^ seed).wrapping_mul(2246822519);
            Rgb([(v >> 8) as u8, (v >> 16) as u8, (v >> 24) as u8])
        })
    }

    #[test]
    fn ids_roundtrip() {
        for id in 0..NUM_TRANSFORMS as u8 {
            assert_eq!(Transform::from_id(id).unwrap().id(), id);
        }
        assert!(Transform::from_id(72).is_err());
    }

    #[test]
    fn constant_region_gives_72_identical_patches() {
        let img = Image::from_pixel(40, 40, Rgb([9, 8, 7]));
        let out = augment_patch(&img, Point::new(20, 20), 11).unwrap();
        assert_eq!(out.len(), 72);
        assert!(out.iter().all(|p| *p == out[0]));
    }

    #[test]
    fn dihedral_outputs_are_closed_and_distinct() {
        let img = noise_image(30, 30, 5);
        let outs = augment_patch(&img, Point::new(15, 15), 9).unwrap();
        let zero: Vec<&Patch> = outs[..DIHEDRAL].iter().collect();
        for a in 0..DIHEDRAL {
            for b in &zero {
                let t = Transform::from_id(a as u8).unwrap();
                let composed = t.apply_dihedral(b);
                assert!(zero.iter().any(|p| **p == composed));
            }
            for b in a + 1..DIHEDRAL {
                assert_ne!(zero[a], zero[b]);
            }
        }
    }

    #[test]
    fn shifted_extraction_moves_window() {
        let img = noise_image(40, 40, 1);
        let t = Transform::from_id(8 * 8 + 0).unwrap();
        assert_eq!(t.offset(), (3, 3));
        let p = t.extract(&img, Point::new(20, 20), 5).unwrap();
        let direct = extract_square_patch(&img, Point::new(23, 23), 5).unwrap();
        assert_eq!(p, direct);
    }

    #[test]
    fn mode_sets() {
        assert_eq!(AugmentMode::None.transform_ids(), vec![0]);
        assert_eq!(AugmentMode::Translation.multiplier(), 9);
        assert_eq!(AugmentMode::Rotation.multiplier(), 8);
        assert_eq!(AugmentMode::Both.multiplier(), 72);
        for m in ["none", "trans", "rot", "both"] {
            assert_eq!(m.parse::<AugmentMode>().unwrap().to_string(), m);
        }
        assert!("flip".parse::<AugmentMode>().is_err());
    }

    proptest! {
        #[test]
        fn always_72_even_at_borders(cx in -5i64..45, cy in -5i64..35, side in 1usize..30) {
            let img = noise_image(40, 30, 2);
            prop_assert_eq!(augment_patch(&img, Point::new(cx, cy), side).unwrap().len(), 72);
        }
    }
}
