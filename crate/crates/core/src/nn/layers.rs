//! Layer kinds with forward and reverse-mode passes.
//!
//! Spatial activations are laid out per sample as `[channels, height, width]`;
//! flat activations as `[features]`. With one input channel this is the same
//! memory layout as `height x width x 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::{gemm, Real};
use super::tensor::Tensor;

/// Architecture-level description of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { out_channels: usize, kernel: usize },
    Relu,
    MaxPool2,
    Dropout { rate: f64 },
    Flatten,
    Dense { out_units: usize },
    Softmax,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

/// Valid (unpadded) stride-1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `out_channels x (in_channels * kernel * kernel)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `out_features x in_features`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Relu,
    MaxPool2,
    Dropout { rate: f64 },
    Flatten,
    Dense(Dense<T>),
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-pass state: mode plus the key dropout masks are derived from.
///
/// The mask of sample `s` at layer `l` depends only on
/// `(noise_seed, l, first_sample + s)`, so splitting a batch into chunks never
/// changes which units are dropped.
#[derive(Clone, Copy, Debug)]
pub struct PassCtx {
    pub mode: Mode,
    pub noise_seed: u64,
    pub first_sample: u64,
}

impl PassCtx {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            noise_seed: 0,
            first_sample: 0,
        }
    }

    pub fn train(noise_seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            noise_seed,
            first_sample: 0,
        }
    }

    pub fn offset(self, by: usize) -> Self {
        Self {
            first_sample: self.first_sample + by as u64,
            ..self
        }
    }
}

/// SplitMix64 finaliser, used to derive independent seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5851_f42d_4c95_7f2d, |acc, &p| mix64(acc ^ p))
}

/// Saved forward state a layer needs for its backward pass.
#[derive(Clone, Debug, Default)]
pub enum Cache<T> {
    #[default]
    None,
    /// im2col matrices for every sample, concatenated.
    Columns(Vec<T>),
    /// Flat index of the winning input element for every pooled output.
    Argmax(Vec<u32>),
    /// Dropout multipliers: 0 or `1 / (1 - rate)`.
    Mask(Vec<T>),
}

/// Parameter gradients of one layer: `(weight, bias)`.
pub type ParamGrad<T> = (Vec<T>, Vec<T>);

/// Output per-sample shape of a layer, or `None` if the input is incompatible.
pub fn output_shape(spec: &LayerSpec, input: &[usize]) -> Option<Vec<usize>> {
    match (spec, input) {
        (LayerSpec::Conv2d { out_channels, kernel }, &[_, h, w]) => {
            (h >= *kernel && w >= *kernel && *kernel > 0 && *out_channels > 0)
                .then(|| vec![*out_channels, h - kernel + 1, w - kernel + 1])
        }
        (LayerSpec::MaxPool2, &[c, h, w]) => (h >= 2 && w >= 2).then(|| vec![c, h / 2, w / 2]),
        (LayerSpec::Relu, s) | (LayerSpec::Dropout { .. }, s) => Some(s.to_vec()),
        (LayerSpec::Flatten, s) => Some(vec![s.iter().product()]),
        (LayerSpec::Dense { out_units }, &[_]) => (*out_units > 0).then(|| vec![*out_units]),
        (LayerSpec::Softmax, &[f]) => Some(vec![f]),
        _ => None,
    }
}

fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let src = &plane[(oy + ky) * w + kx..][..ow];
                    row[oy * ow..(oy + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im_add<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize, dx: &mut [T]) {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let p = oh * ow;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * p..][..p];
                for oy in 0..oh {
                    let dst = &mut plane[(oy + ky) * w + kx..][..ow];
                    for (d, &s) in dst.iter_mut().zip(&row[oy * ow..(oy + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

impl<T: Real> Conv2d<T> {
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn forward(&self, x: &Tensor<T>, keep: bool) -> (Tensor<T>, Cache<T>) {
        let (c, h, w) = dims3(x.sample_shape());
        let k = self.kernel;
        let (oh, ow) = (h - k + 1, w - k + 1);
        let p = oh * ow;
        let kk = self.patch_len();
        let n = x.batch();
        let mut out = Tensor::zeros(vec![n, self.out_channels, oh, ow]);
        let mut cols = vec![T::ZERO; if keep { n * kk * p } else { kk * p }];
        let out_len = self.out_channels * p;
        for s in 0..n {
            let col = if keep {
                &mut cols[s * kk * p..(s + 1) * kk * p]
            } else {
                &mut cols[..]
            };
            im2col(x.sample(s), c, h, w, k, col);
            let y = &mut out.data_mut()[s * out_len..(s + 1) * out_len];
            for (o, chunk) in y.chunks_exact_mut(p).enumerate() {
                chunk.fill(self.bias[o]);
            }
            gemm(
                self.out_channels,
                kk,
                p,
                T::ONE,
                &self.weight,
                false,
                col,
                false,
                T::ONE,
                y,
            );
        }
        let cache = if keep { Cache::Columns(cols) } else { Cache::None };
        (out, cache)
    }

    fn backward(
        &self,
        x_shape: &[usize],
        cache: &Cache<T>,
        dy: &Tensor<T>,
        grad: &mut ParamGrad<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let Cache::Columns(cols) = cache else {
            panic!("conv2d backward without cached columns");
        };
        let (c, h, w) = dims3(&x_shape[1..]);
        let k = self.kernel;
        let p = (h - k + 1) * (w - k + 1);
        let kk = self.patch_len();
        let n = dy.batch();
        let (gw, gb) = grad;
        let mut dx = need_dx.then(|| Tensor::zeros(x_shape.to_vec()));
        let mut dcols = vec![T::ZERO; if need_dx { kk * p } else { 0 }];
        for s in 0..n {
            let col = &cols[s * kk * p..(s + 1) * kk * p];
            let g = dy.sample(s);
            gemm(self.out_channels, p, kk, T::ONE, g, false, col, true, T::ONE, gw);
            for (o, row) in g.chunks_exact(p).enumerate() {
                gb[o] += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    kk,
                    self.out_channels,
                    p,
                    T::ONE,
                    &self.weight,
                    true,
                    g,
                    false,
                    T::ZERO,
                    &mut dcols,
                );
                let len = c * h * w;
                col2im_add(&dcols, c, h, w, k, &mut dx.data_mut()[s * len..(s + 1) * len]);
            }
        }
        dx
    }
}

impl<T: Real> Dense<T> {
    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let n = x.batch();
        let mut out = Tensor::zeros(vec![n, self.out_features]);
        for row in out.data_mut().chunks_exact_mut(self.out_features) {
            row.copy_from_slice(&self.bias);
        }
        gemm(
            n,
            self.in_features,
            self.out_features,
            T::ONE,
            x.data(),
            false,
            &self.weight,
            true,
            T::ONE,
            out.data_mut(),
        );
        out
    }

    fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grad: &mut ParamGrad<T>, need_dx: bool) -> Option<Tensor<T>> {
        let n = x.batch();
        let (gw, gb) = grad;
        gemm(
            self.out_features,
            n,
            self.in_features,
            T::ONE,
            dy.data(),
            true,
            x.data(),
            false,
            T::ONE,
            gw,
        );
        for row in dy.data().chunks_exact(self.out_features) {
            for (b, &g) in gb.iter_mut().zip(row) {
                *b += g;
            }
        }
        need_dx.then(|| {
            let mut dx = Tensor::zeros(x.shape().to_vec());
            gemm(
                n,
                self.out_features,
                self.in_features,
                T::ONE,
                dy.data(),
                false,
                &self.weight,
                false,
                T::ZERO,
                dx.data_mut(),
            );
            dx
        })
    }
}

fn dims3(s: &[usize]) -> (usize, usize, usize) {
    match s {
        &[c, h, w] => (c, h, w),
        _ => panic!("expected a [c, h, w] sample shape, got {s:?}"),
    }
}

fn maxpool_forward<T: Real>(x: &Tensor<T>, keep: bool) -> (Tensor<T>, Cache<T>) {
    let (c, h, w) = dims3(x.sample_shape());
    let (oh, ow) = (h / 2, w / 2);
    let n = x.batch();
    let mut out = Tensor::zeros(vec![n, c, oh, ow]);
    let mut arg = Vec::with_capacity(if keep { out.data().len() } else { 0 });
    let in_len = c * h * w;
    let mut o = 0;
    for s in 0..n {
        for ci in 0..c {
            let base = s * in_len + ci * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x.data()[idx] > x.data()[best] {
                            best = idx;
                        }
                    }
                    out.data_mut()[o] = x.data()[best];
                    if keep {
                        arg.push(best as u32);
                    }
                    o += 1;
                }
            }
        }
    }
    let cache = if keep { Cache::Argmax(arg) } else { Cache::None };
    (out, cache)
}

fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let f = x.sample_len();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(f) {
        let max = row.iter().copied().fold(row[0], |m, v| if v > m { v } else { m });
        let mut total = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

impl<T: Real> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                out_channels: c.out_channels,
                kernel: c.kernel,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2 => LayerSpec::MaxPool2,
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense {
                out_units: d.out_features,
            },
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    pub fn params(&self) -> Option<(&[T], &[T])> {
        match self {
            Layer::Conv2d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    /// `(weight, bias, grad_weight, grad_bias)` for parameterised layers.
    #[allow(clippy::type_complexity)]
    pub fn params_and_grads_mut(&mut self) -> Option<(&mut Vec<T>, &mut Vec<T>, &mut Vec<T>, &mut Vec<T>)> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weight, &mut c.bias, &mut c.grad_weight, &mut c.grad_bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias, &mut d.grad_weight, &mut d.grad_bias)),
            _ => None,
        }
    }

    /// Zeroed gradient buffers shaped like this layer's parameters.
    pub fn zero_grad(&self) -> Option<ParamGrad<T>> {
        self.params()
            .map(|(w, b)| (vec![T::ZERO; w.len()], vec![T::ZERO; b.len()]))
    }

    /// Forward pass for layer `index` of a network. `keep` retains what the
    /// backward pass needs.
    pub fn forward(&self, index: usize, x: &Tensor<T>, ctx: &PassCtx, keep: bool) -> (Tensor<T>, Cache<T>) {
        match self {
            Layer::Conv2d(c) => c.forward(x, keep),
            Layer::Dense(d) => (d.forward(x), Cache::None),
            Layer::Relu => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    // Also zeroes NaN.
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(*v > T::ZERO) {
                        *v = T::ZERO;
                    }
                }
                (y, Cache::None)
            }
            Layer::MaxPool2 => maxpool_forward(x, keep),
            Layer::Dropout { rate } => {
                if ctx.mode == Mode::Eval || *rate == 0.0 {
                    return (x.clone(), Cache::None);
                }
                let keep_scale = T::from_f64(1.0 / (1.0 - rate));
                let per = x.sample_len();
                let mut mask = Vec::with_capacity(x.data().len());
                for s in 0..x.batch() {
                    let seed = derive_seed(&[ctx.noise_seed, index as u64, ctx.first_sample + s as u64]);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    mask.extend((0..per).map(|_| {
                        if rng.random::<f64>() < *rate {
                            T::ZERO
                        } else {
                            keep_scale
                        }
                    }));
                }
                let mut y = x.clone();
                for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                (y, if keep { Cache::Mask(mask) } else { Cache::None })
            }
            Layer::Flatten => {
                let n = x.batch();
                let f = x.sample_len();
                (x.clone().reshape(vec![n, f]), Cache::None)
            }
            Layer::Softmax => (softmax_rows(x), Cache::None),
        }
    }

    /// Reverse pass. `x`/`y` are this layer's input and output; parameter
    /// gradients are accumulated into `grad`. Returns the input gradient when
    /// `need_dx` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        cache: &Cache<T>,
        dy: &Tensor<T>,
        grad: Option<&mut ParamGrad<T>>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => c.backward(x.shape(), cache, dy, grad.expect("conv2d gradient buffer"), need_dx),
            Layer::Dense(d) => d.backward(x, dy, grad.expect("dense gradient buffer"), need_dx),
            _ if !need_dx => None,
            Layer::Relu => {
                let mut dx = dy.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(v > T::ZERO) {
                        *g = T::ZERO;
                    }
                }
                Some(dx)
            }
            Layer::MaxPool2 => {
                let Cache::Argmax(arg) = cache else {
                    panic!("maxpool backward without cached argmax");
                };
                let mut dx = Tensor::zeros(x.shape().to_vec());
                for (&i, &g) in arg.iter().zip(dy.data()) {
                    dx.data_mut()[i as usize] += g;
                }
                Some(dx)
            }
            Layer::Dropout { .. } => {
                let mut dx = dy.clone();
                if let Cache::Mask(mask) = cache {
                    for (g, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                Some(dx)
            }
            Layer::Flatten => Some(dy.clone().reshape(x.shape().to_vec())),
            Layer::Softmax => {
                let f = y.sample_len();
                let mut dx = dy.clone();
                for (g, p) in dx.data_mut().chunks_exact_mut(f).zip(y.data().chunks_exact(f)) {
                    let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
                    for (gi, &pi) in g.iter_mut().zip(p) {
                        *gi = pi * (*gi - dot);
                    }
                }
                Some(dx)
            }
        }
    }
}
