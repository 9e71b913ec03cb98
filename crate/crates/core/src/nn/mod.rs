//! A small reverse-mode layer library.
//!
//! There is no autograd graph. Each layer exposes a forward function and a
//! hand-derived backward function; networks in [`crate::models`] chain them
//! and keep whatever activations the backward pass needs. Everything is
//! generic over [`Real`] so gradient checks can run at 64-bit while training
//! runs at 32-bit.

pub mod checkpoint;
pub mod layers;
pub mod ops;
pub mod optim;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use thiserror::Error;

pub use layers::{BatchNorm1d, Conv1d, Linear};
pub use ops::{
    batchnorm1d_backward, batchnorm1d_forward, concat_channels, conv1d_backward, conv1d_forward,
    global_maxpool_backward, global_maxpool_forward, linear_backward, linear_forward,
    maxpool1d_backward, maxpool1d_forward, relu_backward, relu_forward, softmax,
    softmax_crossentropy, split_channels, BatchNormCache, BnMode,
};
pub use optim::{learning_rate, Optimizer, OptimizerKind, TrainConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch norm needs at least two values per channel in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("pool window {window} larger than length {len}")]
    WindowLargerThanLength { window: usize, len: usize },
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(usize),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Floating-point element type for tensors.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;

    /// `c = a * b + beta * c` over strided views; `a` is `m x k`, `b` is
    /// `k x n`, `c` is `m x n`.
    fn gemm(m: usize, k: usize, n: usize, a: View<'_, Self>, b: View<'_, Self>, beta: Self, c: ViewMut<'_, Self>);
}

/// Strided matrix view: `(data, row_stride, col_stride)`.
pub type View<'a, T> = (&'a [T], usize, usize);
pub type ViewMut<'a, T> = (&'a mut [T], usize, usize);

/// Panics unless every element of a `rows x cols` view lies inside `len`.
fn check_view(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        assert!((rows - 1) * rs + (cols - 1) * cs < len, "gemm view out of bounds");
    }
}

macro_rules! impl_gemm {
    ($f:path) => {
        fn gemm(m: usize, k: usize, n: usize, a: View<'_, Self>, b: View<'_, Self>, beta: Self, c: ViewMut<'_, Self>) {
            check_view(a.0.len(), m, k, a.1, a.2);
            check_view(b.0.len(), k, n, b.1, b.2);
            check_view(c.0.len(), m, n, c.1, c.2);
            if m == 0 || n == 0 {
                return;
            }
            // SAFETY: every strided extent was checked against its slice above,
            // and `c` is uniquely borrowed.
            unsafe {
                $f(
                    m,
                    k,
                    n,
                    1.0,
                    a.0.as_ptr(),
                    a.1 as isize,
                    a.2 as isize,
                    b.0.as_ptr(),
                    b.1 as isize,
                    b.2 as isize,
                    beta,
                    c.0.as_mut_ptr(),
                    c.1 as isize,
                    c.2 as isize,
                );
            }
        }
    };
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    impl_gemm!(matrixmultiply::sgemm);

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    impl_gemm!(matrixmultiply::dgemm);

    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Dense row-major array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self, NnError> {
        Self::from_vec(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    /// Parameter tensor: same as `from_vec` with a zeroed gradient slot.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let mut t = Self::from_vec(shape, data)?;
        t.grad = Some(vec![T::zero(); t.data.len()]);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Value and gradient slices together; panics if the tensor has no
    /// gradient slot.
    pub fn value_and_grad_mut(&mut self) -> (&mut [T], &mut [T]) {
        let grad = self.grad.as_deref_mut().expect("tensor has no gradient slot");
        (&mut self.data, grad)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Adds `delta` into the gradient slot, creating it if absent.
    pub fn accumulate_grad(&mut self, delta: &[T]) {
        let n = self.data.len();
        let g = self.grad.get_or_insert_with(|| vec![T::zero(); n]);
        for (a, &d) in g.iter_mut().zip(delta) {
            *a += d;
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    /// Converts element type, dropping any gradient.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
            grad: None,
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize), NnError> {
        match self.shape[..] {
            [b, c, l] => Ok((b, c, l)),
            _ => Err(NnError::ShapeMismatch(format!("expected [B, C, L], got {:?}", self.shape))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize), NnError> {
        match self.shape[..] {
            [b, f] => Ok((b, f)),
            _ => Err(NnError::ShapeMismatch(format!("expected [B, F], got {:?}", self.shape))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
