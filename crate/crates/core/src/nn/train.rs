use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{derive_seed, Mode, PassCtx};
use super::network::Network;
use super::optim::{Optimizer, OptimizerKind};
use super::real::Real;
use super::NnError;
use crate::exec::Exec;
use crate::imageops::Image;
use crate::mnist::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            rng_seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.epochs == 0 {
            return Err(NnError::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(NnError::BadConfig("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::BadConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Mean minibatch cross-entropy over the epoch (train mode).
    pub train_loss: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.test_accuracy)
    }

    /// `epoch,train_loss,test_accuracy` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,test_accuracy\n");
        for e in &self.epochs {
            let acc = e.test_accuracy.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, acc));
        }
        out
    }
}

pub fn train<T: Real>(
    net: &mut Network<T>,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainReport, NnError> {
    train_with(net, train_set, test_set, cfg, Exec::default(), &mut |_| {})
}

/// Minibatch training. Shuffling, dropout masks and the gradient reduction
/// order depend only on `cfg.rng_seed`, so runs are reproducible bit for bit
/// at any thread count.
pub fn train_with<T: Real>(
    net: &mut Network<T>,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<TrainReport, NnError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.rng_seed, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        net.mode = Mode::Train;
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let images: Vec<&Image> = idx.iter().map(|&i| &train_set.images[i]).collect();
            let labels: Vec<u8> = idx.iter().map(|&i| train_set.labels[i]).collect();
            let batch = Network::<T>::batch_from_images(&images);
            let ctx = PassCtx::train(derive_seed(&[cfg.rng_seed, epoch as u64, b as u64]));
            let loss = net.loss_and_grad_with(&batch, &labels, &ctx, exec)?;
            if !loss.is_finite() {
                net.mode = Mode::Eval;
                return Err(NnError::Divergence { epoch, batch: b, loss });
            }
            opt.step(net);
            total += loss * idx.len() as f64;
        }
        net.mode = Mode::Eval;
        let test_accuracy = test_set
            .filter(|t| !t.is_empty())
            .map(|t| evaluate_with(net, t, exec))
            .transpose()?;
        let e = EpochReport {
            epoch,
            train_loss: total / train_set.len() as f64,
            test_accuracy,
        };
        on_epoch(&e);
        report.epochs.push(e);
    }
    Ok(report)
}

/// Fraction of eval-mode argmax predictions equal to the labels.
pub fn evaluate<T: Real>(net: &Network<T>, data: &Dataset) -> Result<f64, NnError> {
    evaluate_with(net, data, Exec::default())
}

pub fn evaluate_with<T: Real>(net: &Network<T>, data: &Dataset, exec: Exec) -> Result<f64, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let pred = net.predict(&data.images, exec)?;
    let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnist::Split;
    use crate::nn::{Architecture, LayerSpec};

    /// Two linearly separable blob classes on a 6x6 canvas.
    fn toy(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let mut img = Image::zeros(6, 6);
            let (cx, cy) = if label == 0 { (1, 1) } else { (4, 4) };
            for y in 0..6 {
                for x in 0..6 {
                    let near = (x as i32 - cx).abs() <= 1 && (y as i32 - cy).abs() <= 1;
                    let noise: f32 = rng.random_range(0.0..0.2);
                    img.set(x, y, if near { 0.8 + noise } else { noise });
                }
            }
            images.push(img);
            labels.push(label);
        }
        Dataset::new(images, labels, Split::Train).unwrap()
    }

    fn toy_arch() -> Architecture {
        use LayerSpec::*;
        Architecture {
            input: [1, 6, 6],
            preprocessing: "toy".into(),
            layers: vec![
                Conv2d {
                    out_channels: 4,
                    kernel: 3,
                },
                Relu,
                MaxPool2,
                Dropout { rate: 0.25 },
                Flatten,
                Dense { out_units: 2 },
                Softmax,
            ],
        }
    }

    #[test]
    fn learns_toy_problem_and_is_deterministic() {
        let data = toy(200, 1);
        let test = toy(100, 2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 1e-2,
            rng_seed: 9,
            ..TrainConfig::default()
        };
        let mut a = Network::<f32>::new(toy_arch(), 9).unwrap();
        let ra = train_with(&mut a, &data, Some(&test), &cfg, Exec::Parallel, &mut |_| {}).unwrap();
        let mut b = Network::<f32>::new(toy_arch(), 9).unwrap();
        let rb = train_with(&mut b, &data, Some(&test), &cfg, Exec::Sequential, &mut |_| {}).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.final_accuracy().unwrap() > 0.95);
        assert!(ra.epochs[2].train_loss < ra.epochs[0].train_loss);
    }

    #[test]
    fn sgd_also_learns() {
        let data = toy(200, 3);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 10,
            learning_rate: 0.05,
            optimizer: OptimizerKind::Sgd { momentum: 0.9 },
            rng_seed: 1,
        };
        let mut net = Network::<f32>::new(toy_arch(), 1).unwrap();
        train(&mut net, &data, None, &cfg).unwrap();
        assert!(evaluate(&net, &toy(100, 4)).unwrap() > 0.95);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut net = Network::<f32>::new(toy_arch(), 1).unwrap();
        let empty = Dataset::new(vec![], vec![], Split::Train).unwrap();
        assert!(matches!(
            train(&mut net, &empty, None, &TrainConfig::default()),
            Err(NnError::EmptyDataset)
        ));
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&mut net, &toy(4, 1), None, &cfg),
            Err(NnError::BadConfig(_))
        ));
        assert!(matches!(evaluate(&net, &empty), Err(NnError::EmptyDataset)));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            learning_rate: 1e30,
            optimizer: OptimizerKind::Sgd { momentum: 0.0 },
            rng_seed: 0,
        };
        let mut net = Network::<f32>::new(toy_arch(), 0).unwrap();
        let err = train(&mut net, &toy(64, 5), None, &cfg).unwrap_err();
        assert!(matches!(err, NnError::Divergence { .. }), "{err}");
    }

    #[test]
    fn accuracy_ignores_order() {
        let net = Network::<f32>::new(toy_arch(), 2).unwrap();
        let data = toy(50, 6);
        let mut rev = data.clone();
        rev.images.reverse();
        rev.labels.reverse();
        assert_eq!(evaluate(&net, &data).unwrap(), evaluate(&net, &rev).unwrap());
    }

    #[test]
    fn report_csv_layout() {
        let r = TrainReport {
            epochs: vec![EpochReport {
                epoch: 1,
                train_loss: 0.5,
                test_accuracy: Some(0.75),
            }],
        };
        assert_eq!(r.to_csv(), "epoch,train_loss,test_accuracy\n1,0.5,0.75\n");
    }
}
