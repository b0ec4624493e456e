use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{output_shape, Cache, Conv2d, Dense, Layer, LayerSpec, Mode, ParamGrad, PassCtx};
use super::real::Real;
use super::tensor::Tensor;
use super::NnError;
use crate::exec::Exec;
use crate::imageops::Image;

/// Samples per unit of parallel work. Fixed so that gradient sums are reduced
/// in the same order whatever the thread count.
pub const CHUNK: usize = 16;

/// Variance gain of the layer feeding the softmax. Inputs in `[0, 1]` are not
/// zero-mean, so at unit gain each class picks up a fixed random logit offset
/// of order one; the small gain starts the classifier near uniform.
const OUTPUT_GAIN: f64 = 0.01;
const EVAL_CHUNK: usize = 64;

/// Self-contained network description, stored in weight files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Per-sample input shape `[channels, height, width]`.
    pub input: [usize; 3],
    /// Free-form tag naming the input pre-processing the weights were trained on.
    pub preprocessing: String,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// conv3x3x32 - relu - conv3x3x64 - relu - maxpool - dropout .25 - flatten -
    /// dense 128 - relu - dropout .5 - dense 10 - softmax, for an `height x
    /// width` single-channel input. The first dense layer's fan-in follows
    /// the input size.
    pub fn digit_cnn(height: usize, width: usize, preprocessing: impl Into<String>) -> Self {
        use LayerSpec::*;
        Self {
            input: [1, height, width],
            preprocessing: preprocessing.into(),
            layers: vec![
                Conv2d {
                    out_channels: 32,
                    kernel: 3,
                },
                Relu,
                Conv2d {
                    out_channels: 64,
                    kernel: 3,
                },
                Relu,
                MaxPool2,
                Dropout { rate: 0.25 },
                Flatten,
                Dense { out_units: 128 },
                Relu,
                Dropout { rate: 0.5 },
                Dense { out_units: 10 },
                Softmax,
            ],
        }
    }

    /// Per-sample shapes after each layer, starting with the input.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes = vec![self.input.to_vec()];
        for (i, spec) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("non-empty");
            let next = output_shape(spec, cur).ok_or_else(|| {
                NnError::InvalidArchitecture(format!("layer {i} ({}) cannot take input {cur:?}", spec.name()))
            })?;
            if let LayerSpec::Dropout { rate } = spec {
                if !(0.0..1.0).contains(rate) {
                    return Err(NnError::InvalidArchitecture(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
            }
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_classes(&self) -> Result<usize, NnError> {
        Ok(self.shapes()?.last().map_or(0, |s| s.iter().product()))
    }
}

/// Ordered stack of layers plus the seed they were initialised from.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    pub rng_seed: u64,
    pub mode: Mode,
    arch: Architecture,
}

/// Activations and caches of one forward pass.
pub struct Pass<T> {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Tensor<T>>,
    pub caches: Vec<Cache<T>>,
}

impl<T: Real> Network<T> {
    /// Builds the layers of `arch` with seeded fan-in-scaled Gaussian weights
    /// and zero biases. Layers feeding a ReLU use `sqrt(2 / fan_in)`, the
    /// layer feeding the softmax `0.1 * sqrt(1 / fan_in)`, others
    /// `sqrt(1 / fan_in)`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        let shapes = arch.shapes()?;
        match arch.layers.last() {
            Some(LayerSpec::Softmax) => {}
            _ => return Err(NnError::InvalidArchitecture("last layer must be softmax".into())),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            let next = arch.layers[i + 1..]
                .iter()
                .find(|s| !matches!(s, LayerSpec::Dropout { .. }));
            let gain = match next {
                Some(LayerSpec::Relu) => 2.0,
                Some(LayerSpec::Softmax) => OUTPUT_GAIN,
                _ => 1.0,
            };
            let mut init = |fan_in: usize, count: usize| -> Vec<T> {
                let std = (gain / fan_in as f64).sqrt();
                (0..count)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        T::from_f64(z * std)
                    })
                    .collect()
            };
            let layer = match *spec {
                LayerSpec::Conv2d { out_channels, kernel } => {
                    let in_channels = shapes[i][0];
                    let fan_in = in_channels * kernel * kernel;
                    Layer::Conv2d(Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                        weight: init(fan_in, out_channels * fan_in),
                        bias: vec![T::ZERO; out_channels],
                        grad_weight: vec![T::ZERO; out_channels * fan_in],
                        grad_bias: vec![T::ZERO; out_channels],
                    })
                }
                LayerSpec::Dense { out_units } => {
                    let in_features = shapes[i][0];
                    Layer::Dense(Dense {
                        in_features,
                        out_features: out_units,
                        weight: init(in_features, out_units * in_features),
                        bias: vec![T::ZERO; out_units],
                        grad_weight: vec![T::ZERO; out_units * in_features],
                        grad_bias: vec![T::ZERO; out_units],
                    })
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Dropout { rate } => Layer::Dropout { rate },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Softmax => Layer::Softmax,
            };
            layers.push(layer);
        }
        Ok(Self {
            layers,
            rng_seed: seed,
            mode: Mode::Eval,
            arch,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.arch.input
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// SHA-256 over all parameters in declaration order.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (w, b) in self.layers.iter().filter_map(|l| l.params()) {
            for v in w.iter().chain(b) {
                h.update(v.to_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, batch: &Tensor<T>) -> Result<(), NnError> {
        if batch.shape().len() != 4 || batch.sample_shape() != self.arch.input {
            return Err(NnError::ShapeMismatch {
                expected: self.arch.input.to_vec(),
                got: batch.shape().get(1..).unwrap_or_default().to_vec(),
            });
        }
        Ok(())
    }

    /// Runs every layer. With `keep`, all activations and caches are retained.
    pub fn forward_pass(&self, input: Tensor<T>, ctx: &PassCtx, keep: bool) -> Pass<T> {
        let mut acts = vec![input];
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = layer.forward(i, acts.last().expect("non-empty"), ctx, keep);
            if keep {
                acts.push(y);
                caches.push(cache);
            } else {
                acts[0] = y;
            }
        }
        Pass { acts, caches }
    }

    /// Class probabilities for a `[N, c, h, w]` batch in the network's mode.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let ctx = PassCtx {
            mode: self.mode,
            noise_seed: self.rng_seed,
            first_sample: 0,
        };
        self.forward_with(batch, &ctx)
    }

    pub fn forward_with(&self, batch: &Tensor<T>, ctx: &PassCtx) -> Result<Tensor<T>, NnError> {
        self.check_input(batch)?;
        let mut pass = self.forward_pass(batch.clone(), ctx, false);
        Ok(pass.acts.pop().expect("output"))
    }

    /// Summed cross-entropy and summed parameter gradients for one chunk.
    /// The chunk's first sample sits at `ctx.first_sample` within the batch.
    pub fn chunk_loss_and_grad(
        &self,
        input: Tensor<T>,
        labels: &[u8],
        ctx: &PassCtx,
    ) -> (f64, Vec<Option<ParamGrad<T>>>) {
        let pass = self.forward_pass(input, ctx, true);
        let probs = pass.acts.last().expect("output");
        let classes = probs.sample_len();
        let mut loss = 0.0;
        // Softmax and cross-entropy fuse to `p - onehot` at the logits.
        let mut delta = probs.clone();
        for (s, &label) in labels.iter().enumerate() {
            let row = &mut delta.data_mut()[s * classes..(s + 1) * classes];
            let p = row[label as usize].to_f64();
            loss -= if p.is_nan() {
                f64::NAN
            } else {
                p.max(f64::MIN_POSITIVE).ln()
            };
            row[label as usize] -= T::ONE;
        }
        let mut grads: Vec<Option<ParamGrad<T>>> = self.layers.iter().map(|l| l.zero_grad()).collect();
        let last = self.layers.len() - 1;
        for i in (0..last).rev() {
            let need_dx = i > 0;
            let dx = self.layers[i].backward(
                &pass.acts[i],
                &pass.acts[i + 1],
                &pass.caches[i],
                &delta,
                grads[i].as_mut(),
                need_dx,
            );
            match dx {
                Some(d) => delta = d,
                None => break,
            }
        }
        (loss, grads)
    }

    /// Mean categorical cross-entropy over the batch; leaves the mean
    /// parameter gradients in each layer's `grad_*` buffers.
    pub fn loss_and_grad(&mut self, batch: &Tensor<T>, labels: &[u8]) -> Result<f64, NnError> {
        let ctx = PassCtx {
            mode: self.mode,
            noise_seed: self.rng_seed,
            first_sample: 0,
        };
        self.loss_and_grad_with(batch, labels, &ctx, Exec::default())
    }

    pub fn loss_and_grad_with(
        &mut self,
        batch: &Tensor<T>,
        labels: &[u8],
        ctx: &PassCtx,
        exec: Exec,
    ) -> Result<f64, NnError> {
        self.check_input(batch)?;
        let n = batch.batch();
        if labels.len() != n {
            return Err(NnError::ShapeMismatch {
                expected: vec![n],
                got: vec![labels.len()],
            });
        }
        if n == 0 {
            return Err(NnError::EmptyBatch);
        }
        let classes = self.arch.output_classes()?;
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(NnError::BadLabel(bad));
        }
        let per = batch.sample_len();
        let shape = batch.sample_shape().to_vec();
        let this = &*self;
        let parts = exec.map_range(n.div_ceil(CHUNK), |c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = vec![hi - lo];
            s.extend_from_slice(&shape);
            let input = Tensor::new(s, batch.data()[lo * per..hi * per].to_vec());
            this.chunk_loss_and_grad(input, &labels[lo..hi], &ctx.offset(lo))
        });
        let inv = T::from_f64(1.0 / n as f64);
        let mut loss = 0.0;
        for layer in &mut self.layers {
            if let Some((_, _, gw, gb)) = layer.params_and_grads_mut() {
                gw.fill(T::ZERO);
                gb.fill(T::ZERO);
            }
        }
        for (l, grads) in parts {
            loss += l;
            for (layer, g) in self.layers.iter_mut().zip(grads) {
                if let (Some((_, _, gw, gb)), Some((w, b))) = (layer.params_and_grads_mut(), g) {
                    gw.iter_mut().zip(&w).for_each(|(a, &v)| *a += v);
                    gb.iter_mut().zip(&b).for_each(|(a, &v)| *a += v);
                }
            }
        }
        for layer in &mut self.layers {
            if let Some((_, _, gw, gb)) = layer.params_and_grads_mut() {
                gw.iter_mut().chain(gb.iter_mut()).for_each(|v| *v *= inv);
            }
        }
        Ok(loss / n as f64)
    }

    /// Stacks images into a `[N, 1, h, w]` batch.
    pub fn batch_from_images(images: &[&Image]) -> Tensor<T> {
        let (w, h) = images.first().map_or((0, 0), |i| (i.width(), i.height()));
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            assert_eq!((img.width(), img.height()), (w, h), "mixed image sizes in batch");
            data.extend(img.data().iter().map(|&v| T::from_f64(v as f64)));
        }
        Tensor::new(vec![images.len(), 1, h, w], data)
    }

    /// Eval-mode argmax class for every image.
    pub fn predict(&self, images: &[Image], exec: Exec) -> Result<Vec<u8>, NnError> {
        if let Some(img) = images.first() {
            let probe = Tensor::<T>::zeros(vec![1, 1, img.height(), img.width()]);
            self.check_input(&probe)?;
        }
        let ctx = PassCtx::eval();
        let out = exec.map_chunks(images, EVAL_CHUNK, |_, chunk| {
            let refs: Vec<&Image> = chunk.iter().collect();
            let probs = self
                .forward_pass(Self::batch_from_images(&refs), &ctx, false)
                .acts
                .pop()
                .expect("output");
            let k = probs.sample_len();
            probs.data().chunks_exact(k).map(argmax).collect::<Vec<u8>>()
        });
        Ok(out.into_iter().flatten().collect())
    }
}

pub fn argmax<T: Real>(row: &[T]) -> u8 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u8
}
