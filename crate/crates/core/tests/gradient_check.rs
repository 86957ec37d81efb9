mod common;

use common::{finite_difference_gradient, reference_forward, reference_loss, relative_error};
use mothtrap::nncore::{backprop_gradients, Architecture, Layer, Network, Standardizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(len: usize, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|i| i % 2).collect();
    (inputs, labels)
}

/// Fresh networks have zero biases, so a dead layer puts the next
/// pre-activation exactly on the ReLU kink. Small positive biases avoid that.
fn jitter_biases(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in net.layers_mut() {
        let biases = match layer {
            Layer::Conv(c) => &mut c.biases,
            Layer::Fc(f) => &mut f.biases,
            Layer::MaxPool => continue,
        };
        biases.iter_mut().for_each(|b| *b = rng.random_range(0.01..0.1));
    }
}

fn check(net: &Network<f64>, seed: u64) -> f64 {
    let (inputs, labels) = random_batch(net.input_len(), 6, seed);
    let bg = backprop_gradients(net, &inputs, &labels).unwrap();
    assert!((bg.loss - reference_loss(net, &inputs, &labels)).abs() < 1e-12);
    let fd = finite_difference_gradient(net, &inputs, &labels, 1e-5);
    bg.grads
        .iter()
        .zip(&fd)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

#[test]
fn small_convnet_matches_finite_differences() {
    let arch = Architecture { conv: vec![(2, 3)], hidden: vec![8] };
    let mut net = Network::<f64>::convnet(11, 3, &arch, 7).unwrap();
    jitter_biases(&mut net, 7);
    let worst = check(&net, 1);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn two_stage_convnet_with_standardizer() {
    let arch = Architecture { conv: vec![(3, 3), (2, 2)], hidden: vec![5, 4] };
    let mut net = Network::<f64>::convnet(13, 2, &arch, 3).unwrap();
    jitter_biases(&mut net, 3);
    let (samples, _) = random_batch(net.input_len(), 10, 9);
    net.set_standardizer(Standardizer::fit_per_dimension(net.input_len(), &samples).unwrap()).unwrap();
    let worst = check(&net, 2);
    assert!(worst < 1e-4, "worst relative error {worst}");
}

#[test]
fn logistic_regression_matches_finite_differences() {
    let mut net = Network::<f64>::logistic_regression(5, 3).unwrap();
    for (k, p) in net.params_mut().enumerate() {
        *p = ((k * 37 % 11) as f64 - 5.0) * 0.01;
    }
    net.set_standardizer(Standardizer::PerPatch).unwrap();
    assert!(check(&net, 4) < 1e-4);
}

#[test]
fn library_forward_matches_reference() {
    let net = Network::<f64>::convnet(21, 3, &Architecture::default(), 5).unwrap();
    let (inputs, _) = random_batch(net.input_len(), 3, 11);
    let mut ws = net.workspace();
    for x in &inputs {
        let p = net.forward(x, &mut ws).unwrap().to_vec();
        let r = reference_forward(&net, x);
        for (a, b) in p.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

