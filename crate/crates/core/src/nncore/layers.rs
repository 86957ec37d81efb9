//! Layer parameter types and the forward/backward kernels behind them.
//!
//! Feature maps are stored `maps × H × W`, row-major. The slice kernels are
//! what [`Network`](super::Network) runs; the tensor-level functions
//! ([`conv2d`], [`maxpool2`], [`fully_connected`], [`softmax`]) wrap them with
//! shape checks.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Convolutional layer: `out_maps × in_maps × kh × kw` filter bank plus one
/// bias per output map, followed by RELU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub out_maps: usize,
    pub in_maps: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(out_maps: usize, in_maps: usize, kh: usize, kw: usize) -> Self {
        Self {
            out_maps,
            in_maps,
            kh,
            kw,
            weights: vec![T::zero(); out_maps * in_maps * kh * kw],
            biases: vec![T::zero(); out_maps],
        }
    }

    pub fn new(
        out_maps: usize,
        in_maps: usize,
        kh: usize,
        kw: usize,
        weights: Vec<T>,
        biases: Vec<T>,
    ) -> Result<Self> {
        if weights.len() != out_maps * in_maps * kh * kw || biases.len() != out_maps {
            return Err(Error::Dimension(format!(
                "conv {out_maps}x{in_maps}x{kh}x{kw} got {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            out_maps,
            in_maps,
            kh,
            kw,
            weights,
            biases,
        })
    }

    #[inline]
    fn w(&self, k: usize, m: usize, i: usize, j: usize) -> T {
        self.weights[((k * self.in_maps + m) * self.kh + i) * self.kw + j]
    }

    pub fn output_extent(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        (h >= self.kh && w >= self.kw).then(|| (h - self.kh + 1, w - self.kw + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
}

/// Fully connected layer `φ(Wx + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub outputs: usize,
    pub inputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> FcLayer<T> {
    pub fn zeros(outputs: usize, inputs: usize, activation: Activation) -> Self {
        Self {
            outputs,
            inputs,
            weights: vec![T::zero(); outputs * inputs],
            biases: vec![T::zero(); outputs],
            activation,
        }
    }

    pub fn new(
        outputs: usize,
        inputs: usize,
        weights: Vec<T>,
        biases: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != outputs * inputs || biases.len() != outputs {
            return Err(Error::Dimension(format!(
                "fc {outputs}x{inputs} got {} weights and {} biases",
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            outputs,
            inputs,
            weights,
            biases,
            activation,
        })
    }
}

/// Valid cross-correlation of a `in_maps × h × w` input followed by RELU.
pub(crate) fn conv_forward<T: Scalar>(
    layer: &ConvLayer<T>,
    input: &[T],
    h: usize,
    w: usize,
    out: &mut [T],
) {
    let (oh, ow) = (h - layer.kh + 1, w - layer.kw + 1);
    let plane = oh * ow;
    if plane < 64 {
        conv_forward_gathered(layer, input, h, w, out);
        return;
    }
    // Rows are accumulated at the input stride so every kernel tap is one
    // long contiguous multiply-add; the `w - ow` overhang is dropped after.
    let span = (oh - 1) * w + ow;
    let mut acc = vec![T::zero(); span];
    for k in 0..layer.out_maps {
        acc.fill(layer.biases[k]);
        for m in 0..layer.in_maps {
            let inp = &input[m * h * w..(m + 1) * h * w];
            for i in 0..layer.kh {
                for j in 0..layer.kw {
                    let wt = layer.w(k, m, i, j);
                    let off = i * w + j;
                    for (d, s) in acc.iter_mut().zip(&inp[off..off + span]) {
                        *d += wt * *s;
                    }
                }
            }
        }
        let o = &mut out[k * plane..(k + 1) * plane];
        for y in 0..oh {
            for (d, s) in o[y * ow..(y + 1) * ow].iter_mut().zip(&acc[y * w..y * w + ow]) {
                *d = if *s < T::zero() { T::zero() } else { *s };
            }
        }
    }
}

/// Small outputs: gather each receptive field once, then one dot product
/// per output map.
fn conv_forward_gathered<T: Scalar>(layer: &ConvLayer<T>, input: &[T], h: usize, w: usize, out: &mut [T]) {
    let (oh, ow) = (h - layer.kh + 1, w - layer.kw + 1);
    let plane = oh * ow;
    let field = layer.in_maps * layer.kh * layer.kw;
    let mut col = vec![T::zero(); field];
    for y in 0..oh {
        for x in 0..ow {
            let mut t = 0;
            for m in 0..layer.in_maps {
                for i in 0..layer.kh {
                    let row = m * h * w + (y + i) * w + x;
                    col[t..t + layer.kw].copy_from_slice(&input[row..row + layer.kw]);
                    t += layer.kw;
                }
            }
            for (k, wk) in layer.weights.chunks_exact(field).enumerate() {
                let v = layer.biases[k] + dot(wk, &col);
                out[k * plane + y * ow + x] = if v < T::zero() { T::zero() } else { v };
            }
        }
    }
}

/// Backward pass of [`conv_forward`]. `grad_out` holds dL/d(output) and is
/// masked in place by the RELU derivative. Weight and bias gradients are
/// accumulated; `grad_in` is accumulated when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    layer: &ConvLayer<T>,
    input: &[T],
    h: usize,
    w: usize,
    output: &[T],
    grad_out: &mut [T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    mut grad_in: Option<&mut [T]>,
) {
    let (oh, ow) = (h - layer.kh + 1, w - layer.kw + 1);
    let plane = oh * ow;
    for (g, o) in grad_out.iter_mut().zip(output) {
        if *o <= T::zero() {
            *g = T::zero();
        }
    }
    // dL/dz laid out at the input stride, zero in the overhang columns, so
    // each tap is one contiguous dot product or multiply-add.
    let span = (oh - 1) * w + ow;
    let mut dzw = vec![T::zero(); span];
    for k in 0..layer.out_maps {
        let dz = &grad_out[k * plane..(k + 1) * plane];
        grad_b[k] += dz.iter().copied().sum::<T>();
        for y in 0..oh {
            dzw[y * w..y * w + ow].copy_from_slice(&dz[y * ow..(y + 1) * ow]);
        }
        for m in 0..layer.in_maps {
            let inp = &input[m * h * w..(m + 1) * h * w];
            for i in 0..layer.kh {
                for j in 0..layer.kw {
                    let widx = ((k * layer.in_maps + m) * layer.kh + i) * layer.kw + j;
                    let off = i * w + j;
                    grad_w[widx] += dot(&dzw, &inp[off..off + span]);
                    if let Some(gin) = grad_in.as_deref_mut() {
                        let wt = layer.weights[widx];
                        let dst = &mut gin[m * h * w + off..m * h * w + off + span];
                        for (g, a) in dst.iter_mut().zip(&dzw) {
                            *g += wt * *a;
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 max-pooling with stride 2; an odd trailing row/column is cropped.
/// `argmax` receives, per output cell, the flat input index of the first
/// maximum in row-major window order.
pub(crate) fn pool_forward<T: Scalar>(
    input: &[T],
    maps: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    let (oh, ow) = (h / 2, w / 2);
    for m in 0..maps {
        let base = m * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best_idx = base + (2 * y) * w + 2 * x;
                let mut best = input[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[idx] > best {
                        best = input[idx];
                        best_idx = idx;
                    }
                }
                let o = (m * oh + y) * ow + x;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
}

pub(crate) fn pool_backward<T: Scalar>(grad_out: &[T], argmax: &[usize], grad_in: &mut [T]) {
    for (g, &idx) in grad_out.iter().zip(argmax) {
        grad_in[idx] += *g;
    }
}

/// Dot product over four interleaved partial sums, which lets the compiler
/// vectorize; the reduction order is fixed.
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (ca, cb) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut lanes = [T::zero(); 4];
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail
}

pub(crate) fn fc_forward<T: Scalar>(layer: &FcLayer<T>, input: &[T], out: &mut [T]) {
    for (o, (row, b)) in out
        .iter_mut()
        .zip(layer.weights.chunks_exact(layer.inputs).zip(&layer.biases))
    {
        *o = *b + dot(row, input);
    }
    match layer.activation {
        Activation::Relu => {
            for v in out.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        Activation::Softmax => softmax_in_place(out),
    }
}

/// Backward pass of a fully connected layer given dL/dz (pre-activation).
pub(crate) fn fc_backward<T: Scalar>(
    layer: &FcLayer<T>,
    input: &[T],
    grad_z: &[T],
    grad_w: &mut [T],
    grad_b: &mut [T],
    grad_in: Option<&mut [T]>,
) {
    for (o, &dz) in grad_z.iter().enumerate() {
        grad_b[o] += dz;
        let gw = &mut grad_w[o * layer.inputs..(o + 1) * layer.inputs];
        for (g, x) in gw.iter_mut().zip(input) {
            *g += dz * *x;
        }
    }
    if let Some(gin) = grad_in {
        for (o, &dz) in grad_z.iter().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, wv) in gin.iter_mut().zip(row) {
                *g += dz * *wv;
            }
        }
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut v = logits.to_vec();
    if !v.is_empty() {
        softmax_in_place(&mut v);
    }
    v
}

pub fn relu<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// Valid cross-correlation plus bias, then RELU.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.dims3()?;
    if c != layer.in_maps {
        return Err(Error::Dimension(format!(
            "conv expects {} input maps, got {c}",
            layer.in_maps
        )));
    }
    let (oh, ow) = layer.output_extent(h, w).ok_or_else(|| {
        Error::Dimension(format!(
            "{}x{} kernel does not fit a {h}x{w} input",
            layer.kh, layer.kw
        ))
    })?;
    let mut out = vec![T::zero(); layer.out_maps * oh * ow];
    conv_forward(layer, input.data(), h, w, &mut out);
    Ok(Tensor::from_raw(vec![layer.out_maps, oh, ow], out))
}

/// 2×2 max-pooling. Returns the pooled maps and, for each output cell, the
/// flat index into `input` of the value that won.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (c, h, w) = input.dims3()?;
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!("cannot pool a {h}x{w} map")));
    }
    let n = c * (h / 2) * (w / 2);
    let mut out = vec![T::zero(); n];
    let mut argmax = vec![0; n];
    pool_forward(input.data(), c, h, w, &mut out, &mut argmax);
    Ok((Tensor::from_raw(vec![c, h / 2, w / 2], out), argmax))
}

pub fn fully_connected<T: Scalar>(input: &[T], layer: &FcLayer<T>) -> Result<Vec<T>> {
    if input.len() != layer.inputs {
        return Err(Error::Dimension(format!(
            "fc expects {} inputs, got {}",
            layer.inputs,
            input.len()
        )));
    }
    let mut out = vec![T::zero(); layer.outputs];
    fc_forward(layer, input, &mut out);
    Ok(out)
}
