use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

use super::{Gradients, Network};

/// Minibatch SGD settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub momentum: T,
    pub max_epochs: usize,
    pub seed: u64,
    /// Samples drawn (without replacement, reshuffled every epoch) per epoch;
    /// `None` means a full pass over the training set.
    pub epoch_samples: Option<usize>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: lit(0.002),
            batch_size: 256,
            momentum: lit(0.9),
            max_epochs: 100,
            seed: 0,
            epoch_samples: None,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("minibatch size must be at least 1".into()));
        }
        if self.epoch_samples == Some(0) {
            return Err(Error::Config("epoch sample budget must be positive".into()));
        }
        Ok(())
    }
}

/// Classical momentum update on aligned slices:
/// `v ← m·v − lr·g`, `θ ← θ + v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    learning_rate: T,
    momentum: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Dimension(format!(
            "momentum step over {} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - learning_rate * *g;
        *p += *v;
    }
    Ok(())
}

/// Applies one momentum step to every parameter of `net`.
pub fn apply_momentum_step<T: Scalar>(
    net: &mut Network<T>,
    grads: &Gradients<T>,
    velocity: &mut Gradients<T>,
    cfg: &TrainConfig<T>,
) {
    let (lr, m) = (cfg.learning_rate, cfg.momentum);
    for ((p, g), v) in net.params_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        *v = m * *v - lr * *g;
        *p += *v;
    }
}

/// Glorot/Xavier bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `count` i.i.d. draws from `U[-b, b]` with `b` the Glorot bound.
pub fn glorot_uniform_init<T: Scalar>(
    fan_in: usize,
    fan_out: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Config("fan-in and fan-out must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(glorot_uniform_with(fan_in, fan_out, count, &mut rng))
}

pub(crate) fn glorot_uniform_with<T: Scalar, R: Rng>(
    fan_in: usize,
    fan_out: usize,
    count: usize,
    rng: &mut R,
) -> Vec<T> {
    let b = glorot_bound(fan_in, fan_out);
    (0..count)
        .map(|_| lit(rng.random_range(-b..=b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_momentum_step(&mut p, &[0.0, 0.0], &mut v, 0.002, 0.9).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn momentum_steps_match_closed_form() {
        let mut p = vec![0.5];
        let mut v = vec![0.0];
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.002, 0.9).unwrap();
        assert_abs_diff_eq!(v[0], -0.002, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.498, epsilon = 1e-15);
        sgd_momentum_step(&mut p, &[1.0], &mut v, 0.002, 0.9).unwrap();
        assert_abs_diff_eq!(v[0], -0.0038, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.4942, epsilon = 1e-15);
    }

    #[test]
    fn misaligned_buffers_rejected() {
        let mut p = vec![0.0; 2];
        let mut v = vec![0.0; 1];
        assert!(sgd_momentum_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.batch_size, 256);
        assert!(TrainConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { momentum: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok.clone() }.validate().is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a: Vec<f64> = glorot_uniform_init(3, 3, 1000, 7).unwrap();
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        let b: Vec<f64> = glorot_uniform_init(3, 3, 1000, 7).unwrap();
        assert_eq!(a, b);
        let c: Vec<f64> = glorot_uniform_init(3, 3, 1000, 8).unwrap();
        assert_ne!(a, c);
        assert!(glorot_uniform_init::<f64>(0, 3, 1, 0).is_err());
    }

    #[test]
    fn glorot_mean_near_zero() {
        let v: Vec<f64> = glorot_uniform_init(3, 3, 100_000, 11).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let b = glorot_bound(100, 28);
        let w: Vec<f32> = glorot_uniform_init(100, 28, 5000, 1).unwrap();
        assert!(w.iter().all(|x| (x.abs() as f64) <= b + 1e-7));
    }
}
