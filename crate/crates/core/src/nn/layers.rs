//! Parameter-holding layers.
//!
//! Layers own their weights and gradient slots; callers own activations and
//! pass the saved inputs back in for the backward pass.

use rand::Rng;

use super::ops::{self, BatchNormCache, BnMode};
use super::{NnError, Real, Tensor};
use crate::seed;

/// Whether a named tensor is trained or only tracked (running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Param,
    Buffer,
}

impl TensorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TensorKind::Param => "param",
            TensorKind::Buffer => "buffer",
        }
    }
}

pub struct Named<'a, T> {
    pub name: String,
    pub kind: TensorKind,
    pub tensor: &'a Tensor<T>,
}

pub struct NamedMut<'a, T> {
    pub name: String,
    pub kind: TensorKind,
    pub tensor: &'a mut Tensor<T>,
}

/// Anything that owns named tensors.
pub trait HasTensors<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>);
    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>);
}

fn kaiming_uniform<T: Real>(n: usize, fan_in: usize, rng: &mut seed::Rng) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
}

fn bias_uniform<T: Real>(n: usize, fan_in: usize, rng: &mut seed::Rng) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
}

/// Same-padded, stride-1, dilated 1-D convolution.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub dilation: usize,
}

impl<T: Real> Conv1d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize, rng: &mut seed::Rng) -> Result<Self, NnError> {
        if kernel % 2 == 0 || dilation == 0 || in_ch == 0 || out_ch == 0 {
            return Err(NnError::ConfigInvalid(format!(
                "conv {in_ch}->{out_ch} k={kernel} d={dilation}: kernel must be odd, sizes positive"
            )));
        }
        let fan_in = in_ch * kernel;
        Ok(Self {
            weight: Tensor::param(&[out_ch, in_ch, kernel], kaiming_uniform(out_ch * fan_in, fan_in, rng))?,
            bias: Tensor::param(&[out_ch], bias_uniform(out_ch, fan_in, rng))?,
            dilation,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        ops::conv1d_forward(x, &self.weight, &self.bias, self.dilation)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>, NnError> {
        let (gx, gw, gb) = ops::conv1d_backward(x, &self.weight, grad_out, self.dilation, need_input_grad)?;
        self.weight.accumulate_grad(gw.data());
        self.bias.accumulate_grad(gb.data());
        Ok(gx)
    }
}

impl<T: Real> HasTensors<T> for Conv1d<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        out.push(Named { name: format!("{prefix}.weight"), kind: TensorKind::Param, tensor: &self.weight });
        out.push(Named { name: format!("{prefix}.bias"), kind: TensorKind::Param, tensor: &self.bias });
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        out.push(NamedMut { name: format!("{prefix}.weight"), kind: TensorKind::Param, tensor: &mut self.weight });
        out.push(NamedMut { name: format!("{prefix}.bias"), kind: TensorKind::Param, tensor: &mut self.bias });
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Batch normalization with running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::param(&[channels], vec![T::one(); channels]).expect("shape"),
            beta: Tensor::param(&[channels], vec![T::zero(); channels]).expect("shape"),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (y, _) = ops::batchnorm1d_forward(
            x,
            self.gamma.data(),
            self.beta.data(),
            self.running_mean.data(),
            self.running_var.data(),
            self.eps,
            BnMode::Eval,
        )?;
        Ok(y)
    }

    /// Normalizes by batch statistics and folds them into the running
    /// estimates (unbiased variance, momentum update).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>), NnError> {
        let (y, cache) = ops::batchnorm1d_forward(
            x,
            self.gamma.data(),
            self.beta.data(),
            self.running_mean.data(),
            self.running_var.data(),
            self.eps,
            BnMode::Train,
        )?;
        let cache = cache.expect("train mode yields a cache");
        let (b, _, l) = x.dims3()?;
        let n = (b * l) as f64;
        let m = self.momentum;
        for (c, (&mean, &var)) in cache.mean.iter().zip(&cache.var).enumerate() {
            let unbiased = var * n / (n - 1.0);
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = T::of((1.0 - m) * rm.f64() + m * mean);
            let rv = &mut self.running_var.data_mut()[c];
            *rv = T::of(((1.0 - m) * rv.f64() + m * unbiased).max(f64::MIN_POSITIVE));
        }
        Ok((y, cache))
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (gx, gg, gb) = ops::batchnorm1d_backward(cache, self.gamma.data(), grad_out)?;
        self.gamma.accumulate_grad(&gg);
        self.beta.accumulate_grad(&gb);
        Ok(gx)
    }
}

impl<T: Real> HasTensors<T> for BatchNorm1d<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        out.push(Named { name: format!("{prefix}.gamma"), kind: TensorKind::Param, tensor: &self.gamma });
        out.push(Named { name: format!("{prefix}.beta"), kind: TensorKind::Param, tensor: &self.beta });
        out.push(Named { name: format!("{prefix}.running_mean"), kind: TensorKind::Buffer, tensor: &self.running_mean });
        out.push(Named { name: format!("{prefix}.running_var"), kind: TensorKind::Buffer, tensor: &self.running_var });
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        out.push(NamedMut { name: format!("{prefix}.gamma"), kind: TensorKind::Param, tensor: &mut self.gamma });
        out.push(NamedMut { name: format!("{prefix}.beta"), kind: TensorKind::Param, tensor: &mut self.beta });
        out.push(NamedMut {
            name: format!("{prefix}.running_mean"),
            kind: TensorKind::Buffer,
            tensor: &mut self.running_mean,
        });
        out.push(NamedMut {
            name: format!("{prefix}.running_var"),
            kind: TensorKind::Buffer,
            tensor: &mut self.running_var,
        });
    }
}

/// Fully connected layer, weight shaped `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut seed::Rng) -> Result<Self, NnError> {
        if fan_in == 0 || fan_out == 0 {
            return Err(NnError::ConfigInvalid(format!("linear {fan_in}->{fan_out}")));
        }
        Ok(Self {
            weight: Tensor::param(&[fan_out, fan_in], kaiming_uniform(fan_out * fan_in, fan_in, rng))?,
            bias: Tensor::param(&[fan_out], bias_uniform(fan_out, fan_in, rng))?,
        })
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        ops::linear_forward(x, &self.weight, &self.bias)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (gx, gw, gb) = ops::linear_backward(x, &self.weight, grad_out)?;
        self.weight.accumulate_grad(gw.data());
        self.bias.accumulate_grad(gb.data());
        Ok(gx)
    }
}

impl<T: Real> HasTensors<T> for Linear<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        out.push(Named { name: format!("{prefix}.weight"), kind: TensorKind::Param, tensor: &self.weight });
        out.push(Named { name: format!("{prefix}.bias"), kind: TensorKind::Param, tensor: &self.bias });
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        out.push(NamedMut { name: format!("{prefix}.weight"), kind: TensorKind::Param, tensor: &mut self.weight });
        out.push(NamedMut { name: format!("{prefix}.bias"), kind: TensorKind::Param, tensor: &mut self.bias });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_init_shapes_and_bounds() {
        let mut rng = seed::rng(1);
        let c = Conv1d::<f64>::new(4, 8, 3, 2, &mut rng).unwrap();
        assert_eq!(c.weight.shape(), &[8, 4, 3]);
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(c.weight.data().iter().all(|w| w.abs() <= bound));
        assert!(Conv1d::<f64>::new(4, 8, 4, 1, &mut rng).is_err());
    }

    #[test]
    fn batchnorm_running_stats_stay_positive_and_move() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let x = Tensor::from_f64(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        bn.forward_train(&x).unwrap();
        // mean 2.5, unbiased var 5/3
        assert!((bn.running_mean.data()[0] - 0.25).abs() < 1e-12);
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
        assert!(bn.running_var.data()[0] > 0.0);
    }
}
