//! First-order optimizers: SGD with classical momentum, Adam, Adagrad.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{shape_err, Error, Result};

/// Update rule together with its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Adagrad {
        lr: f64,
        eps: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adagrad() -> Self {
        Self::Adagrad {
            lr: 1e-2,
            eps: 1e-8,
        }
    }

    pub fn sgd_momentum() -> Self {
        Self::SgdMomentum {
            lr: 1e-2,
            momentum: 0.9,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Self::SgdMomentum { lr, .. } | Self::Adam { lr, .. } | Self::Adagrad { lr, .. } => lr,
        }
    }

    /// Same rule and hyperparameters with a different learning rate.
    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Self::SgdMomentum { momentum, .. } => Self::SgdMomentum { lr, momentum },
            Self::Adam {
                beta1, beta2, eps, ..
            } => Self::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
            Self::Adagrad { eps, .. } => Self::Adagrad { lr, eps },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SgdMomentum { .. } => "sgd_momentum",
            Self::Adam { .. } => "adam",
            Self::Adagrad { .. } => "adagrad",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    // momentum buffer / Adam first moment / Adagrad squared-gradient sum
    first: Matrix,
    // Adam second moment
    second: Option<Matrix>,
}

/// Optimizer accumulators for one fixed, ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step_count: u64,
    slots: Vec<Slot>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            step_count: 0,
            slots: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to `params` in place.
    ///
    /// All gradients are validated before any parameter is touched, so on
    /// error neither the parameters nor the state change.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err(
                "optimizer_step",
                format!("{} gradients", params.len()),
                format!("{} gradients", grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if !p.same_shape(g) {
                return Err(shape_err(
                    "optimizer_step",
                    format!("param {i} shape {:?}", p.shape()),
                    format!("{:?}", g.shape()),
                ));
            }
            g.ensure_finite(&format!("gradient of parameter {i}"))?;
        }
        if self.slots.is_empty() {
            let with_second = matches!(self.kind, OptimizerKind::Adam { .. });
            self.slots = params
                .iter()
                .map(|p| Slot {
                    first: Matrix::zeros(p.rows(), p.cols()),
                    second: with_second.then(|| Matrix::zeros(p.rows(), p.cols())),
                })
                .collect();
        } else if self.slots.len() != params.len()
            || self
                .slots
                .iter()
                .zip(params.iter())
                .any(|(s, p)| !s.first.same_shape(p))
        {
            return Err(Error::InvalidArgument(
                "optimizer state was created for a different parameter set".into(),
            ));
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        for ((param, grad), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
            let p = param.data_mut();
            let g = grad.data();
            match self.kind {
                OptimizerKind::SgdMomentum { lr, momentum } => {
                    let v = slot.first.data_mut();
                    for i in 0..p.len() {
                        v[i] = momentum * v[i] + g[i];
                        p[i] -= lr * v[i];
                    }
                }
                OptimizerKind::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let bc1 = 1.0 - beta1.powf(t);
                    let bc2 = 1.0 - beta2.powf(t);
                    let m = slot.first.data_mut();
                    let v = slot.second.as_mut().expect("adam slot").data_mut();
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let denom = (v[i] / bc2).sqrt() + eps;
                        if denom > 0.0 {
                            p[i] -= lr * m_hat / denom;
                        }
                    }
                }
                OptimizerKind::Adagrad { lr, eps } => {
                    let acc = slot.first.data_mut();
                    for i in 0..p.len() {
                        acc[i] += g[i] * g[i];
                        let denom = acc[i].sqrt() + eps;
                        if denom > 0.0 {
                            p[i] -= lr * g[i] / denom;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
