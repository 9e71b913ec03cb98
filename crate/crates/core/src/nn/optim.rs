//! Optimizers with a per-epoch exponential learning-rate schedule.

use std::fmt;
use std::str::FromStr;

use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// SGD with momentum 0.9.
    SgdMomentum,
    /// Plain SGD, no momentum.
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd_momentum" => Ok(Self::SgdMomentum),
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(NnError::ConfigInvalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate at epoch 0.
    pub lr0: f64,
    /// Multiplicative decay applied once per epoch.
    pub gamma: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 200,
            lr0: 1e-3,
            gamma: 0.95,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(NnError::ConfigInvalid(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(NnError::ConfigInvalid("batch_size must be at least 1".into()));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(NnError::ConfigInvalid(format!("lr0 must be positive, got {}", self.lr0)));
        }
        Ok(())
    }
}

/// `lr0 * gamma^epoch`.
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    config.lr0 * config.gamma.powi(epoch as i32)
}

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state, indexed by parameter position; callers must pass
/// parameters in the same order on every step.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update at the learning rate scheduled for `epoch`. Parameters
    /// without a gradient slot are skipped. Nothing is modified if any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], config: &TrainConfig, epoch: usize) -> Result<f64, NnError> {
        let lr = learning_rate(config, epoch);
        self.step_with_lr(params, lr)?;
        Ok(lr)
    }

    pub fn step_with_lr(&mut self, params: &mut [&mut Tensor<T>], lr: f64) -> Result<(), NnError> {
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NnError::NonFiniteGradient(i));
                }
            }
        }
        if self.first.len() != params.len() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let lr_t = T::of(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    if p.grad().is_none() {
                        continue;
                    }
                    let (value, grad) = p.value_and_grad_mut();
                    for (w, &g) in value.iter_mut().zip(grad.iter()) {
                        *w -= lr_t * g;
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                let mu = T::of(MOMENTUM);
                for (p, vel) in params.iter_mut().zip(self.first.iter_mut()) {
                    if p.grad().is_none() {
                        continue;
                    }
                    let (value, grad) = p.value_and_grad_mut();
                    for ((w, &g), v) in value.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
                        *v = mu * *v + g;
                        *w -= lr_t * *v;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let c1 = T::of(1.0 - ADAM_BETA1.powi(t));
                let c2 = T::of(1.0 - ADAM_BETA2.powi(t));
                let eps = T::of(ADAM_EPS);
                let one = T::one();
                for ((p, m), v) in params.iter_mut().zip(self.first.iter_mut()).zip(self.second.iter_mut()) {
                    if p.grad().is_none() {
                        continue;
                    }
                    let (value, grad) = p.value_and_grad_mut();
                    for (((w, &g), mi), vi) in value.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (one - b1) * g;
                        *vi = b2 * *vi + (one - b2) * g * g;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *w -= lr_t * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
