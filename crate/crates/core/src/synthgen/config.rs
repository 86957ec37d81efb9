use crate::error::{Error, Result};

/// Closed interval used for sampled scene parameters.
pub type Range = (f64, f64);

/// Parameters of the synthetic trap-scene generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Mean moth count over all images, moth-free ones included.
    pub mean_moths: f64,
    /// Fraction of images drawn without moths by `generate_dataset`.
    pub no_moth_fraction: f64,
    /// Full length and width of the moth body ellipse.
    pub body_length: Range,
    pub body_width: Range,
    pub wing_probability: f64,
    pub mean_flies: f64,
    pub mean_leaves: f64,
    /// Round moth-coloured beetles and debris.
    pub mean_beetles: f64,
    /// Elongated moth-sized seeds and scales without wings or head shading.
    pub mean_debris: f64,
    /// Soft dark stains on the liner.
    pub mean_smudges: f64,
    pub lure_probability: f64,
    pub lure_radius: Range,
    /// Liner brightness before tinting.
    pub liner_level: f64,
    pub texture_amplitude: f64,
    pub specks: usize,
    /// Per-channel illumination gains (R, G, B).
    pub tint: [Range; 3],
    pub blur_sigma: Range,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            mean_moths: 25.1,
            no_moth_fraction: 44.0 / 177.0,
            body_length: (12.0, 19.0),
            body_width: (5.0, 8.0),
            wing_probability: 0.5,
            mean_flies: 6.0,
            mean_leaves: 1.0,
            mean_beetles: 4.0,
            mean_debris: 6.0,
            mean_smudges: 2.0,
            lure_probability: 0.7,
            lure_radius: (35.0, 60.0),
            liner_level: 185.0,
            texture_amplitude: 10.0,
            specks: 150,
            tint: [(0.8, 1.05), (0.9, 1.0), (0.7, 1.0)],
            blur_sigma: (0.5, 1.3),
            noise_amplitude: 5.0,
            seed: 42,
        }
    }
}

fn check_range(name: &str, r: Range) -> Result<()> {
    if !(r.0.is_finite() && r.1.is_finite() && 0.0 <= r.0 && r.0 <= r.1) {
        return Err(Error::Config(format!("{name} range {r:?} must be nonnegative and ordered")));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 32 || self.height < 32 {
            return Err(Error::Config(format!("scene {}x{} is too small", self.width, self.height)));
        }
        for (name, v) in [
            ("mean moths", self.mean_moths),
            ("mean flies", self.mean_flies),
            ("mean leaves", self.mean_leaves),
            ("mean beetles", self.mean_beetles),
            ("mean debris", self.mean_debris),
            ("mean smudges", self.mean_smudges),
            ("liner level", self.liner_level),
            ("texture amplitude", self.texture_amplitude),
            ("noise amplitude", self.noise_amplitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} {v} must be nonnegative")));
            }
        }
        check_prob("no-moth fraction", self.no_moth_fraction)?;
        if self.no_moth_fraction >= 1.0 && self.mean_moths > 0.0 {
            return Err(Error::Config("no-moth fraction 1 leaves no room for moths".into()));
        }
        check_prob("wing probability", self.wing_probability)?;
        check_prob("lure probability", self.lure_probability)?;
        check_range("body length", self.body_length)?;
        check_range("body width", self.body_width)?;
        check_range("lure radius", self.lure_radius)?;
        check_range("blur sigma", self.blur_sigma)?;
        for (c, r) in self.tint.iter().enumerate() {
            check_range(&format!("tint channel {c}"), *r)?;
        }
        let longest = self.body_length.1.max(self.body_width.1 * 3.0);
        if longest * 2.0 + 8.0 > f64::from(self.width.min(self.height)) {
            return Err(Error::Config("moths do not fit the scene".into()));
        }
        if self.body_width.0 < 1.0 || self.body_length.0 < 1.0 {
            return Err(Error::Config("moth axes must be at least one pixel".into()));
        }
        Ok(())
    }
}
