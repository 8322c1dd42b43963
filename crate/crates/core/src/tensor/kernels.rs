//! Raw array math behind the tape ops: GEMM wrappers, im2col/col2im
//! convolution, pooling and batch-norm arithmetic. Everything here works on
//! plain `&[f64]` buffers; shape checking happens one level up.

use crate::error::{Error, Result};

use super::Padding;

/// c(m×n) = a(m×k) · b(k×n), all row-major.
pub(crate) fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c(m×n) += a(m×k) · bᵀ where b is stored row-major as (n×k).
pub(crate) fn gemm_nt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c(m×n) += aᵀ · b where a is stored row-major as (k×m).
pub(crate) fn gemm_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Resolved geometry of a 2-D convolution or pooling window.
///
/// Layouts are channels-last: input (n,h,w,cin), kernel (kh,kw,cin,cout),
/// output (n,h_out,w_out,cout). `batched` records whether the caller passed
/// a rank-4 tensor (so the output keeps its batch axis).
#[derive(Debug, Clone)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub batched: bool,
}

impl ConvDims {
    pub fn out_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.h_out, self.w_out, self.cout]
        } else {
            vec![self.h_out, self.w_out, self.cout]
        }
    }

    pub fn in_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.n, self.h, self.w, self.cin]
        } else {
            vec![self.h, self.w, self.cin]
        }
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn out_positions(&self) -> usize {
        self.n * self.h_out * self.w_out
    }
}

fn spatial_out(extent: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            let out = extent.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(extent);
            Ok((out, total / 2))
        }
        Padding::Zero(p) => {
            if extent + 2 * p < k {
                return Err(Error::dimension(format!(
                    "kernel extent {k} larger than padded input {extent}+2*{p}"
                )));
            }
            Ok(((extent + 2 * p - k) / stride + 1, p))
        }
    }
}

fn split_input_shape(shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c, false)),
        [n, h, w, c] => Ok((n, h, w, c, true)),
        _ => Err(Error::dimension(format!(
            "conv input must have rank 3 (h,w,c) or 4 (n,h,w,c), got {shape:?}"
        ))),
    }
}

pub(crate) fn conv_dims(
    input_shape: &[usize],
    kernel_shape: &[usize],
    stride: usize,
    padding: Padding,
) -> Result<ConvDims> {
    if stride == 0 {
        return Err(Error::parameter("conv stride must be >= 1"));
    }
    let (n, h, w, cin, batched) = split_input_shape(input_shape)?;
    let [kh, kw, kcin, cout] = *kernel_shape else {
        return Err(Error::dimension(format!(
            "conv kernel must have rank 4 (kh,kw,cin,cout), got {kernel_shape:?}"
        )));
    };
    if kcin != cin {
        return Err(Error::dimension(format!(
            "kernel input channels {kcin} do not match input channels {cin} \
             (input {input_shape:?}, kernel {kernel_shape:?})"
        )));
    }
    let (h_out, pad_top) = spatial_out(h, kh, stride, padding)?;
    let (w_out, pad_left) = spatial_out(w, kw, stride, padding)?;
    Ok(ConvDims {
        n,
        h,
        w,
        cin,
        kh,
        kw,
        cout,
        stride,
        pad_top,
        pad_left,
        h_out,
        w_out,
        batched,
    })
}

pub(crate) fn pool_dims(
    input_shape: &[usize],
    k: usize,
    stride: usize,
    padding: Padding,
) -> Result<ConvDims> {
    if stride == 0 {
        return Err(Error::parameter("pool stride must be >= 1"));
    }
    let (n, h, w, cin, batched) = split_input_shape(input_shape)?;
    let (h_out, pad_top) = spatial_out(h, k, stride, padding)?;
    let (w_out, pad_left) = spatial_out(w, k, stride, padding)?;
    Ok(ConvDims {
        n,
        h,
        w,
        cin,
        kh: k,
        kw: k,
        cout: cin,
        stride,
        pad_top,
        pad_left,
        h_out,
        w_out,
        batched,
    })
}

/// Unfold input patches into a (out_positions × patch_len) matrix.
/// Out-of-bounds (padding) cells stay zero.
pub(crate) fn im2col(x: &[f64], d: &ConvDims) -> Vec<f64> {
    let patch = d.patch_len();
    let mut cols = vec![0.0; d.out_positions() * patch];
    for ni in 0..d.n {
        for oy in 0..d.h_out {
            for ox in 0..d.w_out {
                let row = ((ni * d.h_out + oy) * d.w_out + ox) * patch;
                for ky in 0..d.kh {
                    let iy = (oy * d.stride + ky) as isize - d.pad_top as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * d.stride + kx) as isize - d.pad_left as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let src = ((ni * d.h + iy as usize) * d.w + ix as usize) * d.cin;
                        let dst = row + (ky * d.kw + kx) * d.cin;
                        cols[dst..dst + d.cin].copy_from_slice(&x[src..src + d.cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatter-add patch rows back into an input-shaped buffer.
pub(crate) fn col2im(cols: &[f64], d: &ConvDims) -> Vec<f64> {
    let patch = d.patch_len();
    let mut x = vec![0.0; d.n * d.h * d.w * d.cin];
    for ni in 0..d.n {
        for oy in 0..d.h_out {
            for ox in 0..d.w_out {
                let row = ((ni * d.h_out + oy) * d.w_out + ox) * patch;
                for ky in 0..d.kh {
                    let iy = (oy * d.stride + ky) as isize - d.pad_top as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * d.stride + kx) as isize - d.pad_left as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let dst = ((ni * d.h + iy as usize) * d.w + ix as usize) * d.cin;
                        let src = row + (ky * d.kw + kx) * d.cin;
                        for c in 0..d.cin {
                            x[dst + c] += cols[src + c];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Cross-correlation: out = im2col(x) · k, with k flattened to (patch_len × cout).
pub(crate) fn conv_forward(x: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let cols = im2col(x, d);
    let mut out = vec![0.0; d.out_positions() * d.cout];
    gemm_nn(d.out_positions(), d.patch_len(), d.cout, &cols, kernel, &mut out);
    out
}

/// Gradient of the conv output w.r.t. its input; also the forward pass of the
/// transposed convolution.
pub(crate) fn conv_backward_input(g_out: &[f64], kernel: &[f64], d: &ConvDims) -> Vec<f64> {
    let m = d.out_positions();
    let patch = d.patch_len();
    let mut gcols = vec![0.0; m * patch];
    // gcols(m×patch) = g_out(m×cout) · kᵀ, kernel stored (patch×cout)
    gemm_nt_acc(m, d.cout, patch, g_out, kernel, &mut gcols);
    col2im(&gcols, d)
}

/// Gradient of the conv output w.r.t. the kernel: im2col(x)ᵀ · g_out.
pub(crate) fn conv_backward_kernel(x: &[f64], g_out: &[f64], d: &ConvDims) -> Vec<f64> {
    let cols = im2col(x, d);
    let mut gk = vec![0.0; d.patch_len() * d.cout];
    gemm_tn_acc(d.patch_len(), d.out_positions(), d.cout, &cols, g_out, &mut gk);
    gk
}

/// Window index recorded for pooled cells whose window was entirely padding.
pub(crate) const POOL_EMPTY: usize = usize::MAX;

/// Max pooling; returns the pooled values and the flat input index of each
/// selected maximum (first hit wins on ties, so replay is deterministic).
pub(crate) fn max_pool_forward(x: &[f64], d: &ConvDims) -> (Vec<f64>, Vec<usize>) {
    let out_len = d.out_positions() * d.cin;
    let mut out = vec![0.0; out_len];
    let mut argmax = vec![POOL_EMPTY; out_len];
    for ni in 0..d.n {
        for oy in 0..d.h_out {
            for ox in 0..d.w_out {
                let obase = ((ni * d.h_out + oy) * d.w_out + ox) * d.cin;
                for ky in 0..d.kh {
                    let iy = (oy * d.stride + ky) as isize - d.pad_top as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..d.kw {
                        let ix = (ox * d.stride + kx) as isize - d.pad_left as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        let ibase = ((ni * d.h + iy as usize) * d.w + ix as usize) * d.cin;
                        for c in 0..d.cin {
                            let v = x[ibase + c];
                            let o = obase + c;
                            if argmax[o] == POOL_EMPTY || v > out[o] {
                                out[o] = v;
                                argmax[o] = ibase + c;
                            }
                        }
                    }
                }
            }
        }
    }
    (out, argmax)
}

/// Saved state a batch-norm node needs for its backward pass.
#[derive(Debug, Clone)]
pub(crate) struct BnSaved {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub rows: usize,
    pub training: bool,
}

/// Per-channel (last axis) mean and biased variance.
pub(crate) fn channel_stats(x: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = x.len() / c;
    let mut mean = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows as f64;
    }
    let mut var = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in var.iter_mut() {
        *s /= rows as f64;
    }
    (mean, var)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_normalize(
    x: &[f64],
    c: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
    training: bool,
) -> (Vec<f64>, BnSaved) {
    let rows = x.len() / c;
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (r, row) in x.chunks_exact(c).enumerate() {
        let base = r * c;
        for (j, v) in row.iter().enumerate() {
            let h = (v - mean[j]) * inv_std[j];
            xhat[base + j] = h;
            y[base + j] = gamma[j] * h + beta[j];
        }
    }
    (
        y,
        BnSaved {
            xhat,
            inv_std,
            rows,
            training,
        },
    )
}

/// Row-wise softmax, numerically stabilised by the row max.
pub(crate) fn softmax_rows(logits: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut probs = vec![0.0; n * k];
    for i in 0..n {
        let row = &logits[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (j, v) in row.iter().enumerate() {
            let e = (v - max).exp();
            probs[i * k + j] = e;
            sum += e;
        }
        for j in 0..k {
            probs[i * k + j] /= sum;
        }
    }
    probs
}

/// Mean cross-entropy of softmax(logits) against integer labels; returns the
/// loss and the softmax matrix saved for the backward pass.
pub(crate) fn softmax_xent(logits: &[f64], n: usize, k: usize, labels: &[usize]) -> (f64, Vec<f64>) {
    let probs = softmax_rows(logits, n, k);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        loss -= probs[i * k + label].max(1e-300).ln();
    }
    (loss / n as f64, probs)
}
