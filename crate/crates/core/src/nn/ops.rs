//! Forward and backward kernels.
//!
//! Activations are `[batch, channels, length]` or `[batch, features]`,
//! row-major. Inner loops run over contiguous length slices so they
//! vectorize.

use super::{NnError, Real, Tensor};

#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = (acc[0] + acc[4]) + (acc[1] + acc[5]) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// Interior output range `[t0, t1)` whose tap at offset `s` stays inside
/// a length-`len` row.
#[inline]
fn tap_range(s: isize, len: usize) -> Option<(usize, usize)> {
    let t0 = (-s).max(0) as usize;
    let t1 = (len as isize - s).min(len as isize);
    if t1 <= t0 as isize {
        None
    } else {
        Some((t0, t1 as usize))
    }
}

fn conv_shapes<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize), NnError> {
    let (b, cin, len) = x.dims3()?;
    let (cout, wcin, k) = match weight.shape()[..] {
        [o, c, k] => (o, c, k),
        _ => return Err(NnError::ShapeMismatch(format!("conv weight {:?}", weight.shape()))),
    };
    if wcin != cin {
        return Err(NnError::ShapeMismatch(format!(
            "conv expects {wcin} input channels, got {cin}"
        )));
    }
    if k % 2 == 0 {
        return Err(NnError::ShapeMismatch(format!("same padding needs an odd kernel, got {k}")));
    }
    if bias.shape() != [cout] {
        return Err(NnError::ShapeMismatch(format!("conv bias {:?} for {cout} outputs", bias.shape())));
    }
    Ok((b, cin, len, cout, k))
}

/// Stride-1 dilated cross-correlation with "same" zero padding:
/// `y[b,o,t] = bias[o] + sum_{c,j} x[b,c,t + d(j - (k-1)/2)] w[o,c,j]`.
pub fn conv1d_forward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>, NnError> {
    let (batch, cin, len, cout, k) = conv_shapes(x, weight, bias)?;
    let half = (k / 2) as isize;
    let d = dilation.max(1) as isize;
    let (xs, ws, bs) = (x.data(), weight.data(), bias.data());
    let mut y = Tensor::zeros(&[batch, cout, len]);
    let out = y.data_mut();
    // one GEMM per tap: y[:, t0..t1] += w[:, :, j] * x[:, t0+s..t1+s]
    for b in 0..batch {
        let xb = &xs[b * cin * len..][..cin * len];
        let yb = &mut out[b * cout * len..][..cout * len];
        for (o, row) in yb.chunks_exact_mut(len).enumerate() {
            row.iter_mut().for_each(|v| *v = bs[o]);
        }
        for j in 0..k {
            let s = d * (j as isize - half);
            let Some((t0, t1)) = tap_range(s, len) else { continue };
            let lo = (t0 as isize + s) as usize;
            T::gemm(
                cout,
                cin,
                t1 - t0,
                (&ws[j..], cin * k, k),
                (&xb[lo..], len, 1),
                T::one(),
                (&mut yb[t0..], len, 1),
            );
        }
    }
    Ok(y)
}

/// Gradients of [`conv1d_forward`]: `(grad_x, grad_weight, grad_bias)`.
/// `grad_x` is skipped (returned as `None`) when `need_input_grad` is false.
pub fn conv1d_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    dilation: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>), NnError> {
    let cout = weight.shape().first().copied().unwrap_or(0);
    let bias_shape = Tensor::<T>::zeros(&[cout]);
    let (batch, cin, len, cout, k) = conv_shapes(x, weight, &bias_shape)?;
    if grad_out.shape() != [batch, cout, len] {
        return Err(NnError::ShapeMismatch(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [batch, cout, len]
        )));
    }
    let half = (k / 2) as isize;
    let d = dilation.max(1) as isize;
    let (xs, ws, gys) = (x.data(), weight.data(), grad_out.data());
    let mut gx = need_input_grad.then(|| Tensor::zeros(&[batch, cin, len]));
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[cout]);
    for b in 0..batch {
        let xb = &xs[b * cin * len..][..cin * len];
        let gyb = &gys[b * cout * len..][..cout * len];
        for (o, row) in gyb.chunks_exact(len).enumerate() {
            gb.data_mut()[o] += row.iter().copied().sum::<T>();
        }
        for j in 0..k {
            let s = d * (j as isize - half);
            let Some((t0, t1)) = tap_range(s, len) else { continue };
            let lo = (t0 as isize + s) as usize;
            let n = t1 - t0;
            // gw[:, :, j] += gy[:, t0..t1] * x[:, lo..lo+n]^T
            T::gemm(
                cout,
                n,
                cin,
                (&gyb[t0..], len, 1),
                (&xb[lo..], 1, len),
                T::one(),
                (&mut gw.data_mut()[j..], cin * k, k),
            );
            if let Some(gx) = gx.as_mut() {
                // gx[:, lo..lo+n] += w[:, :, j]^T * gy[:, t0..t1]
                T::gemm(
                    cin,
                    cout,
                    n,
                    (&ws[j..], k, cin * k),
                    (&gyb[t0..], len, 1),
                    T::one(),
                    (&mut gx.data_mut()[b * cin * len + lo..], len, 1),
                );
            }
        }
    }
    Ok((gx, gw, gb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// What the batch-norm backward pass needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<f64>,
    /// Biased batch variance per channel.
    pub var: Vec<f64>,
}

/// Per-channel batch normalization over `(batch, length)`.
///
/// In train mode the batch statistics normalize `x` and are returned in the
/// cache so the caller can update running statistics; in eval mode the
/// supplied running statistics are used and no cache is produced.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm1d_forward<T: Real>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
    mode: BnMode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>), NnError> {
    let (batch, ch, len) = x.dims3()?;
    if gamma.len() != ch || beta.len() != ch || running_mean.len() != ch || running_var.len() != ch {
        return Err(NnError::ShapeMismatch(format!("batch norm over {ch} channels")));
    }
    let xs = x.data();
    let mut y = Tensor::zeros(x.shape());
    match mode {
        BnMode::Eval => {
            let ys = y.data_mut();
            for c in 0..ch {
                let inv = T::of(1.0 / (running_var[c].f64() + eps).sqrt());
                let scale = gamma[c] * inv;
                let shift = beta[c] - running_mean[c] * scale;
                for b in 0..batch {
                    let off = (b * ch + c) * len;
                    for (yv, &xv) in ys[off..off + len].iter_mut().zip(&xs[off..off + len]) {
                        *yv = xv * scale + shift;
                    }
                }
            }
            Ok((y, None))
        }
        BnMode::Train => {
            let n = batch * len;
            if n < 2 {
                return Err(NnError::DegenerateBatch(n));
            }
            let mut x_hat = Tensor::zeros(x.shape());
            let mut means = Vec::with_capacity(ch);
            let mut vars = Vec::with_capacity(ch);
            let mut inv_std = Vec::with_capacity(ch);
            for c in 0..ch {
                let mut sum = 0.0;
                for b in 0..batch {
                    let off = (b * ch + c) * len;
                    sum += xs[off..off + len].iter().map(|v| v.f64()).sum::<f64>();
                }
                let mean = sum / n as f64;
                let mut sq = 0.0;
                for b in 0..batch {
                    let off = (b * ch + c) * len;
                    sq += xs[off..off + len].iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>();
                }
                let var = sq / n as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let (mean_t, inv_t) = (T::of(mean), T::of(inv));
                for b in 0..batch {
                    let off = (b * ch + c) * len;
                    let xh = &mut x_hat.data_mut()[off..off + len];
                    for (h, &xv) in xh.iter_mut().zip(&xs[off..off + len]) {
                        *h = (xv - mean_t) * inv_t;
                    }
                    let ys = &mut y.data_mut()[off..off + len];
                    for (yv, &h) in ys.iter_mut().zip(&x_hat.data()[off..off + len]) {
                        *yv = gamma[c] * h + beta[c];
                    }
                }
                means.push(mean);
                vars.push(var);
                inv_std.push(inv_t);
            }
            Ok((
                y,
                Some(BatchNormCache {
                    x_hat,
                    inv_std,
                    mean: means,
                    var: vars,
                }),
            ))
        }
    }
}

/// Train-mode batch-norm gradients: `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm1d_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &[T],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    let (batch, ch, len) = grad_out.dims3()?;
    if cache.x_hat.shape() != grad_out.shape() {
        return Err(NnError::ShapeMismatch("batch norm cache vs grad_out".into()));
    }
    let n = (batch * len) as f64;
    let gys = grad_out.data();
    let xh = cache.x_hat.data();
    let mut gx = Tensor::zeros(grad_out.shape());
    let mut ggamma = vec![T::zero(); ch];
    let mut gbeta = vec![T::zero(); ch];
    for c in 0..ch {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for b in 0..batch {
            let off = (b * ch + c) * len;
            sum_g += gys[off..off + len].iter().map(|v| v.f64()).sum::<f64>();
            sum_gx += dot(&gys[off..off + len], &xh[off..off + len]).f64();
        }
        ggamma[c] = T::of(sum_gx);
        gbeta[c] = T::of(sum_g);
        let k = gamma[c] * cache.inv_std[c];
        let mean_g = T::of(sum_g / n);
        let mean_gx = T::of(sum_gx / n);
        for b in 0..batch {
            let off = (b * ch + c) * len;
            let out = &mut gx.data_mut()[off..off + len];
            for ((o, &g), &h) in out.iter_mut().zip(&gys[off..off + len]).zip(&xh[off..off + len]) {
                *o = k * (g - mean_g - h * mean_gx);
            }
        }
    }
    Ok((gx, ggamma, gbeta))
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
    y
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    x.data_mut().iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Gradient through ReLU given its output: passes where `output > 0`.
pub fn relu_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = grad_out.clone();
    relu_backward_inplace(output, &mut g);
    g
}

pub fn relu_backward_inplace<T: Real>(output: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Non-overlapping max pooling; returns the output and, per output element,
/// the input index of the selected maximum (first index on ties).
pub fn maxpool1d_forward<T: Real>(x: &Tensor<T>, window: usize) -> Result<(Tensor<T>, Vec<u32>), NnError> {
    let (batch, ch, len) = x.dims3()?;
    if window == 0 || window > len {
        return Err(NnError::WindowLargerThanLength { window, len });
    }
    let out_len = len / window;
    let mut y = Tensor::zeros(&[batch, ch, out_len]);
    let mut idx = vec![0u32; batch * ch * out_len];
    let xs = x.data();
    for row in 0..batch * ch {
        let xr = &xs[row * len..][..len];
        let yr = &mut y.data_mut()[row * out_len..][..out_len];
        let ir = &mut idx[row * out_len..][..out_len];
        for (t, (yv, iv)) in yr.iter_mut().zip(ir.iter_mut()).enumerate() {
            let base = t * window;
            let mut best = base;
            for p in base + 1..base + window {
                if xr[p] > xr[best] {
                    best = p;
                }
            }
            *yv = xr[best];
            *iv = best as u32;
        }
    }
    Ok((y, idx))
}

pub fn maxpool1d_backward<T: Real>(
    grad_out: &Tensor<T>,
    indices: &[u32],
    input_len: usize,
) -> Result<Tensor<T>, NnError> {
    let (batch, ch, out_len) = grad_out.dims3()?;
    if indices.len() != grad_out.len() {
        return Err(NnError::ShapeMismatch("max pool indices".into()));
    }
    let mut gx = Tensor::zeros(&[batch, ch, input_len]);
    let gys = grad_out.data();
    for row in 0..batch * ch {
        let gxr = &mut gx.data_mut()[row * input_len..][..input_len];
        for t in 0..out_len {
            let i = row * out_len + t;
            gxr[indices[i] as usize] += gys[i];
        }
    }
    Ok(gx)
}

/// Max over the whole length axis: `[B, C, L] -> [B, C]`.
pub fn global_maxpool_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>), NnError> {
    let (batch, ch, len) = x.dims3()?;
    if len == 0 {
        return Err(NnError::WindowLargerThanLength { window: 1, len });
    }
    let (y, idx) = maxpool1d_forward(x, len)?;
    Tensor::from_vec(&[batch, ch], y.into_data()).map(|t| (t, idx))
}

pub fn global_maxpool_backward<T: Real>(
    grad_out: &Tensor<T>,
    indices: &[u32],
    input_len: usize,
) -> Result<Tensor<T>, NnError> {
    let (batch, ch) = grad_out.dims2()?;
    let g3 = Tensor::from_vec(&[batch, ch, 1], grad_out.data().to_vec())?;
    maxpool1d_backward(&g3, indices, input_len)
}

/// `y = x W^T + b` with `W` shaped `[out, in]`.
pub fn linear_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (batch, fin) = x.dims2()?;
    let (fout, wfin) = weight.dims2()?;
    if wfin != fin || bias.shape() != [fout] {
        return Err(NnError::ShapeMismatch(format!(
            "linear {:?} x {:?} + {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let mut y = Tensor::zeros(&[batch, fout]);
    for b in 0..batch {
        let xr = &x.data()[b * fin..][..fin];
        for o in 0..fout {
            y.data_mut()[b * fout + o] = bias.data()[o] + dot(xr, &weight.data()[o * fin..][..fin]);
        }
    }
    Ok(y)
}

/// `(grad_x, grad_weight, grad_bias)` for [`linear_forward`].
pub fn linear_backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (batch, fin) = x.dims2()?;
    let (fout, _) = weight.dims2()?;
    if grad_out.shape() != [batch, fout] {
        return Err(NnError::ShapeMismatch("linear grad_out".into()));
    }
    let mut gx = Tensor::zeros(&[batch, fin]);
    let mut gw = Tensor::zeros(&[fout, fin]);
    let mut gb = Tensor::zeros(&[fout]);
    for b in 0..batch {
        let xr = &x.data()[b * fin..][..fin];
        for o in 0..fout {
            let g = grad_out.data()[b * fout + o];
            gb.data_mut()[o] += g;
            axpy(g, xr, &mut gw.data_mut()[o * fin..][..fin]);
            axpy(g, &weight.data()[o * fin..][..fin], &mut gx.data_mut()[b * fin..][..fin]);
        }
    }
    Ok((gx, gw, gb))
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (batch, classes) = logits.dims2()?;
    let mut p = Tensor::zeros(logits.shape());
    for b in 0..batch {
        let row = &logits.data()[b * classes..][..classes];
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.f64() - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (o, e) in p.data_mut()[b * classes..][..classes].iter_mut().zip(exps) {
            *o = T::of(e / z);
        }
    }
    Ok(p)
}

/// Mean cross-entropy of `softmax(logits)` against integer targets, and its
/// gradient `(softmax - onehot) / B`.
pub fn softmax_crossentropy<T: Real>(logits: &Tensor<T>, targets: &[usize]) -> Result<(f64, Tensor<T>), NnError> {
    let (batch, classes) = logits.dims2()?;
    if targets.len() != batch {
        return Err(NnError::ShapeMismatch(format!("{} targets for batch {batch}", targets.len())));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(NnError::TargetOutOfRange { target: bad, classes });
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (b, &target) in targets.iter().enumerate() {
        let row = &logits.data()[b * classes..][..classes];
        let m = row.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.f64()));
        let shifted: Vec<f64> = row.iter().map(|v| v.f64() - m).collect();
        let log_z = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
        loss -= shifted[target] - log_z;
        let g = &mut grad.data_mut()[b * classes..][..classes];
        for (c, gv) in g.iter_mut().enumerate() {
            let p = (shifted[c] - log_z).exp();
            let onehot = if c == target { 1.0 } else { 0.0 };
            *gv = T::of((p - onehot) / batch as f64);
        }
    }
    Ok((loss / batch as f64, grad))
}

/// Concatenates `[B, C_i, L]` tensors along channels.
pub fn concat_channels<T: Real>(parts: &[Tensor<T>]) -> Result<Tensor<T>, NnError> {
    let first = parts.first().ok_or_else(|| NnError::ShapeMismatch("nothing to concatenate".into()))?;
    let (batch, _, len) = first.dims3()?;
    let mut total = 0;
    for p in parts {
        let (b, c, l) = p.dims3()?;
        if b != batch || l != len {
            return Err(NnError::ShapeMismatch("concat parts disagree on batch/length".into()));
        }
        total += c;
    }
    let mut out = Vec::with_capacity(batch * total * len);
    for b in 0..batch {
        for p in parts {
            let c = p.shape()[1];
            out.extend_from_slice(&p.data()[b * c * len..][..c * len]);
        }
    }
    Tensor::from_vec(&[batch, total, len], out)
}

/// Inverse of [`concat_channels`] for gradients.
pub fn split_channels<T: Real>(x: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>, NnError> {
    let (batch, ch, len) = x.dims3()?;
    if widths.iter().sum::<usize>() != ch {
        return Err(NnError::ShapeMismatch(format!("split {widths:?} of {ch} channels")));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(batch * w * len)).collect();
    for b in 0..batch {
        let mut c0 = 0;
        for (part, &w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&x.data()[(b * ch + c0) * len..][..w * len]);
            c0 += w;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::from_vec(&[batch, w, len], d))
        .collect()
}

/// Elementwise `a += b`.
pub fn add_inplace<T: Real>(a: &mut Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(NnError::ShapeMismatch(format!("add {:?} + {:?}", a.shape(), b.shape())));
    }
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
    Ok(())
}
