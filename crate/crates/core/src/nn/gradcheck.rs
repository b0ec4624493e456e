//! Central finite-difference checks of layer backward passes.
//!
//! Each layer is probed through the scalar `L = sum(g * layer(x))` with a
//! random upstream weighting `g`, so one backward call with `dy = g` must
//! reproduce `dL/dx` and `dL/dparams`. Random inputs are drawn away from
//! the ReLU and max-pool kinks so the difference quotient is well defined.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Conv2d, Dense, Layer, PassCtx};
use super::real::Real;
use super::tensor::Tensor;

/// `max|a - n| / max(max|a|, max|n|)`; 0 when both are all zero.
pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    let scale = a.iter().chain(n).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn tensor<T: Real>(shape: Vec<usize>, vals: impl IntoIterator<Item = f64>) -> Tensor<T> {
    Tensor::new(shape, vals.into_iter().map(T::from_f64).collect())
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Magnitudes in `[0.1, 1]` with random sign: at least 0.1 from the ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Distinct values spaced 0.05 apart, shuffled: no max-pool ties within `eps`.
fn well_separated(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 0.5).collect();
    v.shuffle(rng);
    v
}

fn probe<T: Real>(layer: &Layer<T>, x: &Tensor<T>, g: &[f64], ctx: &PassCtx) -> f64 {
    let (y, _) = layer.forward(0, x, ctx, false);
    y.data().iter().zip(g).map(|(v, w)| v.to_f64() * w).sum()
}

/// Relative errors of the input, weight and bias gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradReport {
    pub dx: f64,
    pub dw: f64,
    pub db: f64,
}

impl GradReport {
    pub fn max(&self) -> f64 {
        self.dx.max(self.dw).max(self.db)
    }
}

/// Checks input and parameter gradients of `layer` at `x`.
pub fn check<T: Real>(layer: &Layer<T>, x: &Tensor<T>, ctx: &PassCtx, eps: f64, rng: &mut ChaCha8Rng) -> GradReport {
    let (y, cache) = layer.forward(0, x, ctx, true);
    let g = uniform(rng, y.data().len(), -1.0, 1.0);
    let dy = tensor::<T>(y.shape().to_vec(), g.iter().copied());
    let mut grad = layer.zero_grad();
    let dx = layer
        .backward(x, &y, &cache, &dy, grad.as_mut(), true)
        .expect("input gradient");

    let mut num_dx = Vec::with_capacity(x.data().len());
    for i in 0..x.data().len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        let v = x.data()[i].to_f64();
        xp.data_mut()[i] = T::from_f64(v + eps);
        xm.data_mut()[i] = T::from_f64(v - eps);
        let h = xp.data()[i].to_f64() - xm.data()[i].to_f64();
        num_dx.push((probe(layer, &xp, &g, ctx) - probe(layer, &xm, &g, ctx)) / h);
    }
    let ana_dx: Vec<f64> = dx.data().iter().map(|v| v.to_f64()).collect();
    let mut report = GradReport {
        dx: rel_err(&ana_dx, &num_dx),
        dw: 0.0,
        db: 0.0,
    };

    if let Some((gw, gb)) = grad {
        let numeric = |which: usize, i: usize| -> f64 {
            let perturbed = |delta: f64| -> (Layer<T>, f64) {
                let mut l = layer.clone();
                let (w, b, _, _) = l.params_and_grads_mut().expect("params");
                let t = if which == 0 { w } else { b };
                let v = t[i].to_f64() + delta;
                t[i] = T::from_f64(v);
                let actual = t[i].to_f64();
                (l, actual)
            };
            let (lp, vp) = perturbed(eps);
            let (lm, vm) = perturbed(-eps);
            (probe(&lp, x, &g, ctx) - probe(&lm, x, &g, ctx)) / (vp - vm)
        };
        let num_w: Vec<f64> = (0..gw.len()).map(|i| numeric(0, i)).collect();
        let num_b: Vec<f64> = (0..gb.len()).map(|i| numeric(1, i)).collect();
        report.dw = rel_err(&gw.iter().map(|v| v.to_f64()).collect::<Vec<_>>(), &num_w);
        report.db = rel_err(&gb.iter().map(|v| v.to_f64()).collect::<Vec<_>>(), &num_b);
    }
    report
}

/// One random layer of the given kind together with a valid input.
pub fn instance<T: Real>(kind: &str, rng: &mut ChaCha8Rng) -> (Layer<T>, Tensor<T>, PassCtx) {
    let n = rng.random_range(1..=3);
    let eval = PassCtx::eval();
    match kind {
        "conv2d" => {
            let c = rng.random_range(1..=3);
            let o = rng.random_range(1..=4);
            let k = 3;
            let (h, w) = (rng.random_range(3..=7), rng.random_range(3..=7));
            let fan = c * k * k;
            let layer = Layer::Conv2d(Conv2d {
                in_channels: c,
                out_channels: o,
                kernel: k,
                weight: uniform(rng, o * fan, -0.5, 0.5).into_iter().map(T::from_f64).collect(),
                bias: uniform(rng, o, -0.5, 0.5).into_iter().map(T::from_f64).collect(),
                grad_weight: vec![T::ZERO; o * fan],
                grad_bias: vec![T::ZERO; o],
            });
            let x = tensor(vec![n, c, h, w], uniform(rng, n * c * h * w, -1.0, 1.0));
            (layer, x, eval)
        }
        "dense" => {
            let i = rng.random_range(1..=20);
            let o = rng.random_range(1..=10);
            let layer = Layer::Dense(Dense {
                in_features: i,
                out_features: o,
                weight: uniform(rng, o * i, -0.5, 0.5).into_iter().map(T::from_f64).collect(),
                bias: uniform(rng, o, -0.5, 0.5).into_iter().map(T::from_f64).collect(),
                grad_weight: vec![T::ZERO; o * i],
                grad_bias: vec![T::ZERO; o],
            });
            (layer, tensor(vec![n, i], uniform(rng, n * i, -1.0, 1.0)), eval)
        }
        "relu" => {
            let f = rng.random_range(1..=30);
            (Layer::Relu, tensor(vec![n, f], away_from_zero(rng, n * f)), eval)
        }
        "maxpool2" => {
            let c = rng.random_range(1..=2);
            let (h, w) = (rng.random_range(2..=6), rng.random_range(2..=6));
            let x = tensor(vec![n, c, h, w], well_separated(rng, n * c * h * w));
            (Layer::MaxPool2, x, eval)
        }
        "dropout" => {
            let rate = rng.random_range(0.1..0.7);
            let f = rng.random_range(1..=30);
            let ctx = PassCtx::train(rng.random());
            (
                Layer::Dropout { rate },
                tensor(vec![n, f], uniform(rng, n * f, -1.0, 1.0)),
                ctx,
            )
        }
        "flatten" => {
            let (c, h, w) = (
                rng.random_range(1..=3),
                rng.random_range(1..=4),
                rng.random_range(1..=4),
            );
            (
                Layer::Flatten,
                tensor(vec![n, c, h, w], uniform(rng, n * c * h * w, -1.0, 1.0)),
                eval,
            )
        }
        "softmax" => {
            let f = rng.random_range(2..=10);
            (Layer::Softmax, tensor(vec![n, f], uniform(rng, n * f, -2.0, 2.0)), eval)
        }
        other => panic!("unknown layer kind {other}; see KINDS"),
    }
}

pub const KINDS: [&str; 7] = ["conv2d", "relu", "maxpool2", "dropout", "flatten", "dense", "softmax"];

/// Worst [`GradReport::max`] over `trials` seeded random instances of
/// `kind`, with the trial it came from.
pub fn worst_over_trials<T: Real>(kind: &str, trials: u64, eps: f64) -> (f64, u64) {
    let mut worst = (0.0f64, 0);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 * trial + kind.len() as u64);
        let (layer, x, ctx) = instance::<T>(kind, &mut rng);
        let e = check(&layer, &x, &ctx, eps, &mut rng).max();
        if e > worst.0 {
            worst = (e, trial);
        }
    }
    worst
}
