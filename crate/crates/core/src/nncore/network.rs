use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

use super::layers::{
    conv_backward, conv_forward, fc_backward, fc_forward, pool_backward, pool_forward, Activation,
    ConvLayer, FcLayer,
};
use super::optim::glorot_uniform_with;

/// Number of output classes; index 1 is "moth".
pub const NUM_CLASSES: usize = 2;
pub const MOTH_CLASS: usize = 1;

/// Standard deviations below this map the dimension to zero.
pub const MIN_STD: f64 = 1e-8;

/// Samples per gradient chunk. Chunks are reduced in a fixed order so the
/// summed gradient does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    MaxPool,
    Fc(FcLayer<T>),
}

/// Input standardization applied before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Standardizer<T> {
    Identity,
    /// Per-dimension statistics fitted over a training set.
    PerDimension { mean: Vec<T>, std: Vec<T> },
    /// Each patch normalized by its own mean and standard deviation.
    PerPatch,
}

impl<T: Scalar> Standardizer<T> {
    /// Fits per-dimension mean and (population) standard deviation.
    pub fn fit_per_dimension<I, S>(dim: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[T]>,
    {
        // f64 accumulation regardless of T
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        let mut n = 0usize;
        for s in samples {
            let s = s.as_ref();
            if s.len() != dim {
                return Err(Error::Dimension(format!(
                    "standardization expects {dim} values, got {}",
                    s.len()
                )));
            }
            for ((a, b), v) in sum.iter_mut().zip(sq.iter_mut()).zip(s) {
                let v = v.to_f64_lossy();
                *a += v;
                *b += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Config("cannot fit standardization on zero samples".into()));
        }
        let nf = n as f64;
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for (a, b) in sum.iter().zip(&sq) {
            let m = a / nf;
            let var = (b / nf - m * m).max(0.0);
            mean.push(lit(m));
            std.push(lit(var.sqrt()));
        }
        Ok(Self::PerDimension { mean, std })
    }

    pub fn apply(&self, input: &[T], out: &mut [T]) {
        match self {
            Self::Identity => out.copy_from_slice(input),
            Self::PerDimension { mean, std } => {
                let floor: T = lit(MIN_STD);
                for (((o, x), m), s) in out.iter_mut().zip(input).zip(mean).zip(std) {
                    *o = if *s < floor { T::zero() } else { (*x - *m) / *s };
                }
            }
            Self::PerPatch => {
                let n: T = lit(input.len() as f64);
                let m = input.iter().copied().sum::<T>() / n;
                let var = input.iter().map(|x| (*x - m) * (*x - m)).sum::<T>() / n;
                let s = var.sqrt();
                if s < lit(MIN_STD) {
                    out.fill(T::zero());
                } else {
                    for (o, x) in out.iter_mut().zip(input) {
                        *o = (*x - m) / s;
                    }
                }
            }
        }
    }
}

/// Layer sizes of a LeNet-style ConvNet: each conv stage is followed by 2×2
/// max-pooling, then hidden RELU layers, then a 2-way softmax.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    /// `(output maps, square kernel side)` per conv stage.
    pub conv: Vec<(usize, usize)>,
    pub hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            conv: vec![(16, 5), (32, 5)],
            hidden: vec![128],
        }
    }
}

/// Feed-forward classifier over `channels × side × side` patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    input_side: usize,
    channels: usize,
    layers: Vec<Layer<T>>,
    standardizer: Standardizer<T>,
}

/// Per-layer parameter-shaped buffers (gradients or momentum velocity).
/// Pooling layers hold empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<ParamGrad<T>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrad<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => ParamGrad {
                    weights: vec![T::zero(); c.weights.len()],
                    biases: vec![T::zero(); c.biases.len()],
                },
                Layer::Fc(f) => ParamGrad {
                    weights: vec![T::zero(); f.weights.len()],
                    biases: vec![T::zero(); f.biases.len()],
                },
                Layer::MaxPool => ParamGrad::default(),
            })
            .collect();
        Self { layers }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += *b;
        }
    }

    fn scale(&mut self, s: T) {
        for a in self.iter_mut() {
            *a *= s;
        }
    }
}

/// Loss and gradient of the mean cross-entropy over a batch.
#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub grads: Gradients<T>,
    pub loss: T,
    pub correct: usize,
}

/// Reusable activation buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    shapes: Vec<(usize, usize, usize)>,
    acts: Vec<Vec<T>>,
    argmax: Vec<Vec<usize>>,
    deltas: Vec<Vec<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds a ConvNet with Glorot-uniform weights and zero biases.
    pub fn convnet(input_side: usize, channels: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let (mut c, mut h) = (channels, input_side);
        for &(maps, k) in &arch.conv {
            if k == 0 || maps == 0 || k > h {
                return Err(Error::Config(format!(
                    "conv stage {maps}x{k}x{k} does not fit a {h}x{h} input"
                )));
            }
            let weights = glorot_uniform_with(c * k * k, maps * k * k, maps * c * k * k, &mut rng);
            layers.push(Layer::Conv(ConvLayer::new(maps, c, k, k, weights, vec![T::zero(); maps])?));
            h = h - k + 1;
            if h < 2 {
                return Err(Error::Config(format!("feature map of side {h} cannot be pooled")));
            }
            layers.push(Layer::MaxPool);
            h /= 2;
            c = maps;
        }
        let mut width = c * h * h;
        for &units in &arch.hidden {
            let weights = glorot_uniform_with(width, units, units * width, &mut rng);
            layers.push(Layer::Fc(FcLayer::new(
                units,
                width,
                weights,
                vec![T::zero(); units],
                Activation::Relu,
            )?));
            width = units;
        }
        let weights = glorot_uniform_with(width, NUM_CLASSES, NUM_CLASSES * width, &mut rng);
        layers.push(Layer::Fc(FcLayer::new(
            NUM_CLASSES,
            width,
            weights,
            vec![T::zero(); NUM_CLASSES],
            Activation::Softmax,
        )?));
        Self::from_layers(input_side, channels, layers, Standardizer::Identity)
    }

    /// Logistic regression over the flattened patch: one softmax layer,
    /// zero-initialized.
    pub fn logistic_regression(input_side: usize, channels: usize) -> Result<Self> {
        let width = input_side * input_side * channels;
        let fc = FcLayer::zeros(NUM_CLASSES, width, Activation::Softmax);
        Self::from_layers(input_side, channels, vec![Layer::Fc(fc)], Standardizer::Identity)
    }

    /// Assembles a network and checks that layer shapes chain.
    pub fn from_layers(
        input_side: usize,
        channels: usize,
        layers: Vec<Layer<T>>,
        standardizer: Standardizer<T>,
    ) -> Result<Self> {
        if input_side == 0 || channels == 0 {
            return Err(Error::Dimension("input side and channels must be positive".into()));
        }
        let net = Self {
            input_side,
            channels,
            layers,
            standardizer,
        };
        net.layer_shapes()?;
        match net.layers.last() {
            Some(Layer::Fc(f)) if f.activation == Activation::Softmax && f.outputs == NUM_CLASSES => {}
            _ => {
                return Err(Error::Dimension(
                    "final layer must be a 2-way softmax".into(),
                ))
            }
        }
        if let Standardizer::PerDimension { mean, std } = &net.standardizer {
            if mean.len() != net.input_len() || std.len() != net.input_len() {
                return Err(Error::Dimension("standardization statistics length".into()));
            }
        }
        Ok(net)
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn input_len(&self) -> usize {
        self.input_side * self.input_side * self.channels
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn standardizer(&self) -> &Standardizer<T> {
        &self.standardizer
    }

    pub fn set_standardizer(&mut self, s: Standardizer<T>) -> Result<()> {
        if let Standardizer::PerDimension { mean, std } = &s {
            if mean.len() != self.input_len() || std.len() != self.input_len() {
                return Err(Error::Dimension(format!(
                    "standardization has {} dims, network input has {}",
                    mean.len(),
                    self.input_len()
                )));
            }
        }
        self.standardizer = s;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.biases.len(),
                Layer::Fc(f) => f.weights.len() + f.biases.len(),
                Layer::MaxPool => 0,
            })
            .sum()
    }

    /// Flat view over every weight then bias, in layer order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| {
            let (w, b): (&mut [T], &mut [T]) = match l {
                Layer::Conv(c) => (&mut c.weights, &mut c.biases),
                Layer::Fc(f) => (&mut f.weights, &mut f.biases),
                Layer::MaxPool => (&mut [], &mut []),
            };
            w.iter_mut().chain(b.iter_mut())
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| {
            let (w, b): (&[T], &[T]) = match l {
                Layer::Conv(c) => (&c.weights, &c.biases),
                Layer::Fc(f) => (&f.weights, &f.biases),
                Layer::MaxPool => (&[], &[]),
            };
            w.iter().chain(b.iter())
        })
    }

    /// `(maps, h, w)` of the input and of each layer output; FC outputs are
    /// reported as `(n, 1, 1)`.
    pub fn layer_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let mut shapes = vec![(self.channels, self.input_side, self.input_side)];
        let mut cur = shapes[0];
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv(c) => {
                    if c.in_maps != cur.0 {
                        return Err(Error::Dimension(format!(
                            "layer {i}: conv expects {} maps, gets {}",
                            c.in_maps, cur.0
                        )));
                    }
                    let (oh, ow) = c.output_extent(cur.1, cur.2).ok_or_else(|| {
                        Error::Dimension(format!("layer {i}: kernel larger than input"))
                    })?;
                    (c.out_maps, oh, ow)
                }
                Layer::MaxPool => {
                    if cur.1 < 2 || cur.2 < 2 {
                        return Err(Error::Dimension(format!("layer {i}: map too small to pool")));
                    }
                    (cur.0, cur.1 / 2, cur.2 / 2)
                }
                Layer::Fc(f) => {
                    let n = cur.0 * cur.1 * cur.2;
                    if f.inputs != n {
                        return Err(Error::Dimension(format!(
                            "layer {i}: fc expects {} inputs, gets {n}",
                            f.inputs
                        )));
                    }
                    (f.outputs, 1, 1)
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn workspace(&self) -> Workspace<T> {
        let shapes = self.layer_shapes().expect("shapes validated at construction");
        let acts = shapes
            .iter()
            .map(|(c, h, w)| vec![T::zero(); c * h * w])
            .collect::<Vec<_>>();
        let argmax = shapes[1..]
            .iter()
            .zip(&self.layers)
            .map(|((c, h, w), l)| match l {
                Layer::MaxPool => vec![0; c * h * w],
                _ => Vec::new(),
            })
            .collect();
        let deltas = acts.clone();
        Workspace {
            shapes,
            acts,
            argmax,
            deltas,
        }
    }

    /// Forward pass on a raw (unstandardized) input; returns the class
    /// probabilities, which stay valid in the workspace until the next call.
    pub fn forward<'w>(&self, input: &[T], ws: &'w mut Workspace<T>) -> Result<&'w [T]> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "network expects {} input values, got {}",
                self.input_len(),
                input.len()
            )));
        }
        self.standardizer.apply(input, &mut ws.acts[0]);
        let mut shape = (self.channels, self.input_side, self.input_side);
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(i + 1);
            let x = &head[i];
            let y = &mut tail[0];
            shape = match layer {
                Layer::Conv(c) => {
                    conv_forward(c, x, shape.1, shape.2, y);
                    (c.out_maps, shape.1 - c.kh + 1, shape.2 - c.kw + 1)
                }
                Layer::MaxPool => {
                    pool_forward(x, shape.0, shape.1, shape.2, y, &mut ws.argmax[i]);
                    (shape.0, shape.1 / 2, shape.2 / 2)
                }
                Layer::Fc(f) => {
                    fc_forward(f, x, y);
                    (f.outputs, 1, 1)
                }
            };
        }
        Ok(ws.acts.last().expect("at least one layer"))
    }

    /// Probability of the moth class for one raw patch.
    pub fn predict_one(&self, input: &[T], ws: &mut Workspace<T>) -> Result<T> {
        Ok(self.forward(input, ws)?[MOTH_CLASS])
    }

    /// Accumulates into `grads` the gradient of `-ln p[label]` for one sample
    /// (unscaled) and returns that loss together with the probabilities.
    fn accumulate_sample(
        &self,
        input: &[T],
        label: usize,
        ws: &mut Workspace<T>,
        grads: &mut Gradients<T>,
    ) -> Result<(T, bool)> {
        let probs = self.forward(input, ws)?;
        let p = probs[label].max(T::min_positive_value());
        let loss = -p.ln();
        let predicted = usize::from(probs[MOTH_CLASS] > probs[0]);
        let correct = predicted == label;
        let n = self.layers.len();

        // softmax + cross-entropy: dL/dz = p - onehot
        {
            let delta = &mut ws.deltas[n];
            delta.copy_from_slice(&ws.acts[n]);
            delta[label] -= T::one();
        }
        for i in (0..n).rev() {
            let (dlo, dhi) = ws.deltas.split_at_mut(i + 1);
            let grad_out = &mut dhi[0];
            let grad_in = &mut dlo[i];
            let need_in = i > 0;
            if need_in {
                grad_in.fill(T::zero());
            }
            let g = &mut grads.layers[i];
            let (_, h, w) = ws.shapes[i];
            match &self.layers[i] {
                Layer::Conv(conv) => conv_backward(
                    conv,
                    &ws.acts[i],
                    h,
                    w,
                    &ws.acts[i + 1],
                    grad_out,
                    &mut g.weights,
                    &mut g.biases,
                    need_in.then_some(grad_in.as_mut_slice()),
                ),
                Layer::MaxPool => {
                    if need_in {
                        pool_backward(grad_out, &ws.argmax[i], grad_in);
                    }
                }
                Layer::Fc(fc) => {
                    if fc.activation == Activation::Relu {
                        for (d, a) in grad_out.iter_mut().zip(&ws.acts[i + 1]) {
                            if *a <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                    fc_backward(
                        fc,
                        &ws.acts[i],
                        grad_out,
                        &mut g.weights,
                        &mut g.biases,
                        need_in.then_some(grad_in.as_mut_slice()),
                    );
                }
            }
        }
        Ok((loss, correct))
    }

    /// Mean cross-entropy loss and its gradient over the samples
    /// `indices` of `source`.
    pub fn batch_gradients<S>(&self, source: &S, indices: &[usize]) -> Result<BatchGradients<T>>
    where
        S: PatchSource<T> + ?Sized,
    {
        if indices.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let partials: Vec<Result<(Gradients<T>, T, usize)>> = indices
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut ws = self.workspace();
                let mut grads = Gradients::zeros_like(self);
                let mut input = vec![T::zero(); self.input_len()];
                let mut loss = T::zero();
                let mut correct = 0;
                for &idx in chunk {
                    let label = source.label(idx);
                    if label >= NUM_CLASSES {
                        return Err(Error::Config(format!("label {label} is not a class index")));
                    }
                    source.fill(idx, &mut input);
                    let (l, ok) = self.accumulate_sample(&input, label, &mut ws, &mut grads)?;
                    loss += l;
                    correct += usize::from(ok);
                }
                Ok((grads, loss, correct))
            })
            .collect();
        let mut total = Gradients::zeros_like(self);
        let mut loss = T::zero();
        let mut correct = 0;
        for part in partials {
            let (g, l, c) = part?;
            total.add_assign(&g);
            loss += l;
            correct += c;
        }
        let inv = T::one() / lit(indices.len() as f64);
        total.scale(inv);
        Ok(BatchGradients {
            grads: total,
            loss: loss * inv,
            correct,
        })
    }

    /// Mean cross-entropy loss without gradients.
    pub fn loss<S>(&self, source: &S, indices: &[usize]) -> Result<T>
    where
        S: PatchSource<T> + ?Sized,
    {
        let mut ws = self.workspace();
        let mut input = vec![T::zero(); self.input_len()];
        let mut loss = T::zero();
        for &idx in indices {
            source.fill(idx, &mut input);
            let p = self.forward(&input, &mut ws)?[source.label(idx)];
            loss += -p.max(T::min_positive_value()).ln();
        }
        Ok(loss / lit(indices.len() as f64))
    }
}

/// Indexed collection of raw classifier inputs with labels. Implementations
/// may materialize patches lazily.
pub trait PatchSource<T>: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class index of sample `i` (1 = moth).
    fn label(&self, i: usize) -> usize;

    /// Writes the raw `channels × side × side` input of sample `i`.
    fn fill(&self, i: usize, out: &mut [T]);
}

/// Patches held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemoryPatches<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> InMemoryPatches<T> {
    pub fn new(inputs: Vec<Vec<T>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Dimension("inputs and labels differ in length".into()));
        }
        Ok(Self { inputs, labels })
    }
}

impl<T: Scalar> PatchSource<T> for InMemoryPatches<T> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn fill(&self, i: usize, out: &mut [T]) {
        out.copy_from_slice(&self.inputs[i]);
    }
}

/// Gradient of the mean cross-entropy of `net` over a batch of raw inputs.
pub fn backprop_gradients<T: Scalar>(
    net: &Network<T>,
    inputs: &[Vec<T>],
    labels: &[usize],
) -> Result<BatchGradients<T>> {
    let src = InMemoryPatches::new(inputs.to_vec(), labels.to_vec())?;
    let idx: Vec<usize> = (0..src.len()).collect();
    net.batch_gradients(&src, &idx)
}
