//! Building blocks shared by both network families.

use crate::nn::layers::{HasTensors, Named, NamedMut};
use crate::nn::ops::{self, BatchNormCache};
use crate::nn::{BatchNorm1d, Conv1d, NnError, Real, Tensor};
use crate::seed;

/// Convolution, batch norm, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm1d<T>,
}

impl<T: Real> ConvBnRelu<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize, rng: &mut seed::Rng) -> Result<Self, NnError> {
        Ok(Self {
            conv: Conv1d::new(in_ch, out_ch, kernel, dilation, rng)?,
            bn: BatchNorm1d::new(out_ch),
        })
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mut y = self.bn.forward_eval(&self.conv.forward(x)?)?;
        ops::relu_inplace(&mut y);
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>), NnError> {
        let (mut y, cache) = self.bn.forward_train(&self.conv.forward(x)?)?;
        ops::relu_inplace(&mut y);
        Ok((y, cache))
    }

    /// `x` is the input given to `forward_train`; the ReLU mask is rebuilt
    /// from the cached normalized activations.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        cache: &BatchNormCache<T>,
        grad_out: &Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>, NnError> {
        let (_, ch, len) = grad_out.dims3()?;
        let mut g = grad_out.clone();
        let gamma = self.bn.gamma.data();
        let beta = self.bn.beta.data();
        let xh = cache.x_hat.data();
        for (row, (gr, xr)) in g.data_mut().chunks_exact_mut(len).zip(xh.chunks_exact(len)).enumerate() {
            let (gm, bt) = (gamma[row % ch], beta[row % ch]);
            for (gv, &x) in gr.iter_mut().zip(xr) {
                if gm * x + bt <= T::zero() {
                    *gv = T::zero();
                }
            }
        }
        let g = self.bn.backward(cache, &g)?;
        self.conv.backward(x, &g, need_input_grad)
    }
}

impl<T: Real> HasTensors<T> for ConvBnRelu<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        self.conv.tensors(&format!("{prefix}.conv"), out);
        self.bn.tensors(&format!("{prefix}.bn"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        self.conv.tensors_mut(&format!("{prefix}.conv"), out);
        self.bn.tensors_mut(&format!("{prefix}.bn"), out);
    }
}

/// Pooling stage between blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pool {
    Max(usize),
    Global,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    pub indices: Vec<u32>,
    pub input_len: usize,
}

impl Pool {
    /// Pooled output; global pooling yields `[B, C]`.
    pub fn forward<T: Real>(self, x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache), NnError> {
        let (_, _, len) = x.dims3()?;
        let (y, indices) = match self {
            Pool::Max(w) => ops::maxpool1d_forward(x, w)?,
            Pool::Global => ops::global_maxpool_forward(x)?,
        };
        Ok((y, PoolCache { indices, input_len: len }))
    }

    pub fn backward<T: Real>(self, cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Pool::Max(_) => ops::maxpool1d_backward(grad_out, &cache.indices, cache.input_len),
            Pool::Global => ops::global_maxpool_backward(grad_out, &cache.indices, cache.input_len),
        }
    }
}
