use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::optim::apply_momentum_step;
use super::{Gradients, Network, PatchSource, TrainConfig, MOTH_CLASS};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Snapshot with the highest validation accuracy (earliest on ties).
    pub model: Network<T>,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

/// Minibatch SGD with momentum, keeping the parameters of the epoch with the
/// best validation accuracy. The network's standardizer must already be set.
pub fn train<T, S, V>(
    net: Network<T>,
    train_set: &S,
    val_set: &V,
    cfg: &TrainConfig<T>,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    S: PatchSource<T> + ?Sized,
    V: PatchSource<T> + ?Sized,
{
    cfg.validate()?;
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model: net,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be nonempty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let per_epoch = cfg.epoch_samples.map_or(order.len(), |n| n.min(order.len()));
    let mut velocity = Gradients::zeros_like(&net);
    let mut net = net;
    let mut best: Option<(f64, usize, Network<T>)> = None;
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order[..per_epoch].chunks(cfg.batch_size) {
            let bg = net.batch_gradients(train_set, batch)?;
            let loss = bg.loss.to_f64_lossy();
            if !loss.is_finite() || bg.grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            correct += bg.correct;
            apply_momentum_step(&mut net, &bg.grads, &mut velocity, cfg);
        }
        let (val_loss, val_accuracy) = evaluate(&net, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / per_epoch as f64,
            train_accuracy: correct as f64 / per_epoch as f64,
            val_loss,
            val_accuracy,
        };
        debug!(
            "epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            stats.train_loss, stats.train_accuracy, stats.val_loss, stats.val_accuracy
        );
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, net.clone()));
        }
        history.push(stats);
    }
    let (acc, epoch, model) = best.expect("at least one epoch ran");
    info!("best validation accuracy {acc:.4} at epoch {epoch}");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: Some(epoch),
    })
}

/// Mean cross-entropy and accuracy of `net` over a whole source.
pub fn evaluate<T, S>(net: &Network<T>, set: &S) -> Result<(f64, f64)>
where
    T: Scalar,
    S: PatchSource<T> + ?Sized,
{
    let probs = predict(net, set)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        let label = set.label(i);
        let pl = if label == MOTH_CLASS { p } else { 1.0 - p };
        loss -= pl.max(f64::MIN_POSITIVE).ln();
        correct += usize::from(usize::from(p > 0.5) == label);
    }
    let n = probs.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Moth-class probability for every sample of `set`, after the network's
/// stored standardization.
pub fn predict<T, S>(net: &Network<T>, set: &S) -> Result<Vec<T>>
where
    T: Scalar,
    S: PatchSource<T> + ?Sized,
{
    const CHUNK: usize = 64;
    let chunks: Vec<Result<Vec<T>>> = (0..set.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut ws = net.workspace();
            let mut input = vec![T::zero(); net.input_len()];
            idx.iter()
                .map(|&i| {
                    set.fill(i, &mut input);
                    net.predict_one(&input, &mut ws)
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(set.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Convenience wrapper over raw inputs.
pub fn predict_inputs<T: Scalar>(net: &Network<T>, inputs: &[Vec<T>]) -> Result<Vec<T>> {
    let mut ws = net.workspace();
    inputs
        .iter()
        .map(|x| net.predict_one(x, &mut ws))
        .collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Architecture, InMemoryPatches, Standardizer};

    /// Two classes separated by the sign of the mean pixel offset.
    fn separable(n: usize, side: usize, seed: u64) -> InMemoryPatches<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let offset = if label == 1 { 1.0 } else { -1.0 };
            inputs.push(
                (0..side * side)
                    .map(|_| offset + rng.random_range(-0.5..0.5))
                    .collect(),
            );
            labels.push(label);
        }
        InMemoryPatches::new(inputs, labels).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let net = Network::<f64>::logistic_regression(3, 1).unwrap();
        let data = separable(10, 3, 1);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        let out = train(net.clone(), &data, &data, &cfg).unwrap();
        assert_eq!(out.model, net);
        assert!(out.history.is_empty());
    }

    #[test]
    fn logreg_separates_toy_set() {
        let data = separable(200, 4, 2);
        let val = separable(50, 4, 3);
        let mut net = Network::<f64>::logistic_regression(4, 1).unwrap();
        let s = Standardizer::fit_per_dimension(16, &data.inputs).unwrap();
        net.set_standardizer(s).unwrap();
        let cfg = TrainConfig {
            batch_size: 16,
            max_epochs: 50,
            seed: 5,
            ..Default::default()
        };
        let out = train(net, &data, &val, &cfg).unwrap();
        let (_, acc) = evaluate(&out.model, &data).unwrap();
        assert_eq!(acc, 1.0);
        assert!(out.history.len() == 50);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = separable(64, 8, 4);
        let arch = Architecture {
            conv: vec![(2, 3)],
            hidden: vec![4],
        };
        let run = || {
            let net = Network::<f64>::convnet(8, 1, &arch, 3).unwrap();
            let cfg = TrainConfig {
                batch_size: 8,
                max_epochs: 3,
                seed: 9,
                ..Default::default()
            };
            train(net, &data, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = separable(32, 3, 6);
        let mut net = Network::<f64>::logistic_regression(3, 1).unwrap();
        net.set_standardizer(Standardizer::Identity).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e308,
            batch_size: 4,
            max_epochs: 5,
            ..Default::default()
        };
        match train(net, &data, &data, &cfg) {
            Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn predictions_are_probabilities_and_pure() {
        let net = Network::<f64>::convnet(8, 1, &Architecture { conv: vec![(2, 3)], hidden: vec![3] }, 1)
            .unwrap();
        let x: Vec<f64> = (0..64).map(|i| (i % 7) as f64).collect();
        let p = predict_inputs(&net, &[x.clone(), x.clone()]).unwrap();
        assert_eq!(p[0], p[1]);
        assert!((0.0..=1.0).contains(&p[0]));
        let mut ws = net.workspace();
        let probs = net.forward(&x, &mut ws).unwrap();
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-15);
        assert!(predict_inputs(&net, &[vec![0.0; 10]]).is_err());
    }
}
