//! Forward and backward passes of the dilated convolution stack over one
//! context window, generic over the working precision.
//!
//! Every layer is a "valid" centered convolution: with input length `n` the
//! output has `n - (k - 1) * d` positions, so a window exactly as long as the
//! receptive field collapses to a single position, the middle one.

use std::ops::AddAssign;

use num_traits::Float;

use super::ArchConfig;
use crate::domain::N_CLASSES;

pub trait Scalar: Float + AddAssign + Send + Sync + std::fmt::Debug + 'static {
    fn from_f32(x: f32) -> Self;
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f32(x: f32) -> Self {
        x
    }
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (a8, a_tail) = a.split_at(a.len() - a.len() % 8);
    let (b8, b_tail) = b.split_at(a8.len());
    for (x, y) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in a_tail.iter().zip(b_tail) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

#[inline]
fn elu<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        z.exp_m1()
    }
}

/// Offsets of every parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub layers: Vec<LayerLayout>,
    pub out_weight: usize,
    pub out_bias: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    /// `[kernel][hidden][in_ch]`
    pub weight: usize,
    /// `[hidden]`
    pub bias: usize,
    pub in_ch: usize,
    pub dilation: usize,
}

impl LayerLayout {
    pub fn weight_len(&self, hidden: usize, kernel: usize) -> usize {
        kernel * hidden * self.in_ch
    }
}

/// A parameter tensor of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    /// `[kernel][hidden][in_ch]` weights of convolution layer `j`.
    ConvWeight(usize),
    ConvBias(usize),
    /// `[class][hidden]`
    OutWeight,
    OutBias,
}

impl Layout {
    pub fn range(&self, t: Tensor) -> std::ops::Range<usize> {
        match t {
            Tensor::ConvWeight(j) => {
                let l = &self.layers[j];
                l.weight..l.weight + l.weight_len(self.hidden, self.kernel)
            }
            Tensor::ConvBias(j) => self.layers[j].bias..self.layers[j].bias + self.hidden,
            Tensor::OutWeight => self.out_weight..self.out_bias,
            Tensor::OutBias => self.out_bias..self.total,
        }
    }

    pub fn new(arch: &ArchConfig) -> Self {
        let h = arch.hidden_width;
        let k = arch.kernel_size;
        let mut off = 0;
        let mut layers = Vec::with_capacity(arch.n_layers);
        for (j, &d) in arch.dilations.iter().enumerate() {
            let in_ch = if j == 0 { arch.input_dim } else { h };
            let weight = off;
            off += k * h * in_ch;
            let bias = off;
            off += h;
            layers.push(LayerLayout {
                weight,
                bias,
                in_ch,
                dilation: d,
            });
        }
        let out_weight = off;
        off += N_CLASSES * h;
        let out_bias = off;
        off += N_CLASSES;
        Self {
            layers,
            out_weight,
            out_bias,
            hidden: h,
            kernel: k,
            total: off,
        }
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    input: Vec<T>,
    /// Per layer: pre-activations and activations, `[position][hidden]`.
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
    lens: Vec<usize>,
    grad_post: Vec<T>,
    grad_pre: Vec<T>,
    grad_in: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(layout: &Layout, context_len: usize) -> Self {
        let mut lens = Vec::with_capacity(layout.layers.len());
        let mut n = context_len;
        for l in &layout.layers {
            n -= (layout.kernel - 1) * l.dilation;
            lens.push(n);
        }
        let h = layout.hidden;
        Self {
            input: Vec::new(),
            pre: lens.iter().map(|n| vec![T::zero(); n * h]).collect(),
            post: lens.iter().map(|n| vec![T::zero(); n * h]).collect(),
            lens,
            grad_post: Vec::new(),
            grad_pre: Vec::new(),
            grad_in: Vec::new(),
        }
    }
}

/// Logits for the middle position of `window` (`context_len x input_dim`, row-major).
pub fn forward<T: Scalar>(
    layout: &Layout,
    params: &[T],
    window: &[f32],
    ws: &mut Workspace<T>,
) -> [T; N_CLASSES] {
    let h = layout.hidden;
    let k = layout.kernel;
    ws.input.clear();
    ws.input.extend(window.iter().map(|&x| T::from_f32(x)));

    for (j, l) in layout.layers.iter().enumerate() {
        let n_out = ws.lens[j];
        let (before, rest) = ws.post.split_at_mut(j);
        let x: &[T] = if j == 0 { &ws.input } else { &before[j - 1] };
        let z = &mut ws.pre[j];
        let a = &mut rest[0];
        let w = &params[l.weight..l.weight + l.weight_len(h, k)];
        let b = &params[l.bias..l.bias + h];
        let c = l.in_ch;
        for t in 0..n_out {
            let zt = &mut z[t * h..(t + 1) * h];
            zt.copy_from_slice(b);
            for m in 0..k {
                let row = t + m * l.dilation;
                let xr = &x[row * c..(row + 1) * c];
                let wm = &w[m * h * c..(m + 1) * h * c];
                for (zh, wh) in zt.iter_mut().zip(wm.chunks_exact(c)) {
                    *zh += dot(wh, xr);
                }
            }
            for (ah, zh) in a[t * h..(t + 1) * h].iter_mut().zip(zt.iter()) {
                *ah = elu(*zh);
            }
        }
    }

    let hidden = &ws.post.last().expect("at least one layer")[..h];
    let wo = &params[layout.out_weight..layout.out_weight + N_CLASSES * h];
    let bo = &params[layout.out_bias..layout.out_bias + N_CLASSES];
    let mut logits = [T::zero(); N_CLASSES];
    for (c, logit) in logits.iter_mut().enumerate() {
        *logit = bo[c] + dot(&wo[c * h..(c + 1) * h], hidden);
    }
    logits
}

/// Accumulates `d loss / d params` into `grad` given `d loss / d logits`.
/// Must follow a [`forward`] call on the same workspace.
pub fn backward<T: Scalar>(
    layout: &Layout,
    params: &[T],
    grad_logits: &[T; N_CLASSES],
    ws: &mut Workspace<T>,
    grad: &mut [T],
) {
    let h = layout.hidden;
    let k = layout.kernel;
    let n_layers = layout.layers.len();

    let hidden = &ws.post.last().expect("at least one layer")[..h];
    let wo = &params[layout.out_weight..layout.out_weight + N_CLASSES * h];
    ws.grad_post.clear();
    ws.grad_post.resize(h, T::zero());
    for c in 0..N_CLASSES {
        let g = grad_logits[c];
        axpy(
            &mut grad[layout.out_weight + c * h..layout.out_weight + (c + 1) * h],
            g,
            hidden,
        );
        grad[layout.out_bias + c] += g;
        axpy(&mut ws.grad_post, g, &wo[c * h..(c + 1) * h]);
    }

    for j in (0..n_layers).rev() {
        let l = layout.layers[j];
        let n_out = ws.lens[j];
        let c = l.in_ch;
        let x: &[T] = if j == 0 { &ws.input } else { &ws.post[j - 1] };

        ws.grad_pre.clear();
        ws.grad_pre.extend(
            ws.grad_post
                .iter()
                .zip(&ws.pre[j])
                .zip(&ws.post[j])
                .map(|((&g, &z), &a)| if z > T::zero() { g } else { g * (a + T::one()) }),
        );
        let need_input_grad = j > 0;
        if need_input_grad {
            ws.grad_in.clear();
            ws.grad_in.resize(x.len(), T::zero());
        }

        let w = &params[l.weight..l.weight + l.weight_len(h, k)];
        for t in 0..n_out {
            let gz = &ws.grad_pre[t * h..(t + 1) * h];
            for (b, &g) in grad[l.bias..l.bias + h].iter_mut().zip(gz) {
                *b += g;
            }
            for m in 0..k {
                let row = t + m * l.dilation;
                let xr = &x[row * c..(row + 1) * c];
                let gw = &mut grad[l.weight + m * h * c..l.weight + (m + 1) * h * c];
                for (gwh, &g) in gw.chunks_exact_mut(c).zip(gz) {
                    axpy(gwh, g, xr);
                }
                if need_input_grad {
                    let wm = &w[m * h * c..(m + 1) * h * c];
                    let gx = &mut ws.grad_in[row * c..(row + 1) * c];
                    for (wh, &g) in wm.chunks_exact(c).zip(gz) {
                        axpy(gx, g, wh);
                    }
                }
            }
        }
        if need_input_grad {
            std::mem::swap(&mut ws.grad_post, &mut ws.grad_in);
        }
    }
}

/// Softmax probabilities and `-ln p[target]`, in double precision.
pub fn softmax_xent<T: Scalar>(logits: &[T; N_CLASSES], target: usize) -> ([f64; N_CLASSES], f64) {
    let max = logits
        .iter()
        .map(|l| l.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0f64; N_CLASSES];
    let mut sum = 0.0;
    for (p, l) in probs.iter_mut().zip(logits) {
        *p = (l.as_f64() - max).exp();
        sum += *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    let loss = -(logits[target].as_f64() - max - sum.ln());
    (probs, loss)
}
