use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    momentum: f64,
    step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, momentum: f64, n_params: usize) -> Self {
        Optimizer {
            kind,
            learning_rate,
            momentum,
            step: 0,
            m: vec![0.0; n_params],
            v: if kind == OptimizerKind::Adam {
                vec![0.0; n_params]
            } else {
                Vec::new()
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        match self.kind {
            OptimizerKind::Adam => {
                let b1t = 1.0 - ADAM_BETA1.powi(self.step as i32);
                let b2t = 1.0 - ADAM_BETA2.powi(self.step as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = self.m[i] / b1t;
                    let v_hat = self.v[i] / b2t;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
            OptimizerKind::Sgd => {
                for i in 0..params.len() {
                    self.m[i] = self.momentum * self.m[i] + grads[i];
                    params[i] -= self.learning_rate * self.m[i];
                }
            }
        }
    }
}
