//! Loop-nest references for convolution and matrix products.

/// Dilated 1-D cross-correlation with symmetric zero padding.
///
/// `x` is `[batch, in_ch, len]`, `w` is `[out_ch, in_ch, k]`, output is
/// `[batch, out_ch, len_out]` with `len_out = len + 2*padding - dilation*(k-1)`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv1d(
    x: &[f64],
    batch: usize,
    in_ch: usize,
    len: usize,
    w: &[f64],
    out_ch: usize,
    k: usize,
    bias: &[f64],
    dilation: usize,
    padding: usize,
) -> Vec<f64> {
    let len_out = len + 2 * padding - dilation * (k - 1);
    let mut y = vec![0.0; batch * out_ch * len_out];
    for b in 0..batch {
        for o in 0..out_ch {
            for t in 0..len_out {
                let mut acc = bias[o];
                for c in 0..in_ch {
                    for j in 0..k {
                        let pos = t as isize + (dilation * j) as isize - padding as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += x[(b * in_ch + c) * len + pos as usize] * w[(o * in_ch + c) * k + j];
                        }
                    }
                }
                y[(b * out_ch + o) * len_out + t] = acc;
            }
        }
    }
    y
}

/// `a` is `rows x inner`, `b` is `inner x cols`, both row-major.
pub fn naive_matmul(a: &[f64], b: &[f64], rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for p in 0..inner {
                s += a[i * inner + p] * b[p * cols + j];
            }
            out[i * cols + j] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let x = [1.0, -2.0, 3.0, 4.5];
        let y = naive_conv1d(&x, 1, 1, 4, &[0.0, 1.0, 0.0], 1, 3, &[0.0], 1, 1);
        assert_eq!(y, x);
    }

    #[test]
    fn zero_kernel_is_bias_only() {
        let y = naive_conv1d(&[1.0, 2.0, 3.0], 1, 1, 3, &[0.0; 6], 2, 3, &[0.5, -1.0], 2, 2);
        assert_eq!(y, vec![0.5, 0.5, 0.5, -1.0, -1.0, -1.0]);
    }
}
