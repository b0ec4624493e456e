use serde::{Deserialize, Serialize};

use super::network::Network;
use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd { momentum: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimiser state: one first/second moment buffer per parameter vector.
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update from the gradients stored in `net`'s layers.
    pub fn step(&mut self, net: &mut Network<T>) {
        self.step += 1;
        let mut slot = 0;
        for layer in &mut net.layers {
            let Some((w, b, gw, gb)) = layer.params_and_grads_mut() else {
                continue;
            };
            for (p, g) in [(w, gw), (b, gb)] {
                if self.first.len() == slot {
                    self.first.push(vec![T::ZERO; p.len()]);
                    self.second.push(vec![T::ZERO; p.len()]);
                }
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                match self.kind {
                    OptimizerKind::Adam { beta1, beta2, epsilon } => {
                        let t = self.step as i32;
                        let step = T::from_f64(self.lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t)));
                        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
                        let (c1, c2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
                        let eps = T::from_f64(epsilon * (1.0 - beta2.powi(t)).sqrt());
                        for i in 0..p.len() {
                            let gi = g[i];
                            m[i] = b1 * m[i] + c1 * gi;
                            v[i] = b2 * v[i] + c2 * gi * gi;
                            p[i] -= step * m[i] / (v[i].sqrt() + eps);
                        }
                    }
                    OptimizerKind::Sgd { momentum } => {
                        let mu = T::from_f64(momentum);
                        let lr = T::from_f64(self.lr);
                        for i in 0..p.len() {
                            m[i] = mu * m[i] + g[i];
                            p[i] -= lr * m[i];
                        }
                    }
                }
                slot += 1;
            }
        }
    }
}
