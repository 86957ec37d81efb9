use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/validation/test fractions plus the shuffling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::Split("every split fraction must be positive".into()));
        }
        let s: f64 = self.fractions.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!("fractions sum to {s}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut counts = exact.map(|e| e.floor() as usize);
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    // stable: ties go to the earlier split
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Stratified random split into train/validation/test by the with-moth flag.
/// Returns sorted index lists that are disjoint and cover `0..has_moth.len()`.
pub fn split_indices(has_moth: &[bool], spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    if has_moth.len() < 3 {
        return Err(Error::Split(format!("need at least 3 images, got {}", has_moth.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out: [Vec<usize>; 3] = Default::default();
    for (name, flag) in [("with-moth", true), ("no-moth", false)] {
        let mut members: Vec<usize> = (0..has_moth.len()).filter(|&i| has_moth[i] == flag).collect();
        if members.is_empty() {
            return Err(Error::Split(format!("{name} stratum is empty")));
        }
        let mut counts = apportion(members.len(), &spec.fractions);
        if members.len() < 3 {
            return Err(Error::Split(format!(
                "{name} stratum has {} images, too few for three splits",
                members.len()
            )));
        }
        while let Some(z) = counts.iter().position(|&c| c == 0) {
            let donor = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap_or(0);
            counts[donor] -= 1;
            counts[z] += 1;
        }
        members.shuffle(&mut rng);
        let mut it = members.into_iter();
        for (split, &c) in out.iter_mut().zip(&counts) {
            split.extend(it.by_ref().take(c));
        }
    }
    for s in &mut out {
        s.sort_unstable();
    }
    Ok(out)
}

/// Stratified random subset keeping `fraction` of each stratum (at least one
/// image of every nonempty stratum). Indices are returned sorted.
pub fn subsample_indices(has_moth: &[bool], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for flag in [true, false] {
        let mut members: Vec<usize> = (0..has_moth.len()).filter(|&i| has_moth[i] == flag).collect();
        if members.is_empty() {
            continue;
        }
        let k = ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len());
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..k]);
    }
    keep.sort_unstable();
    Ok(keep)
}
