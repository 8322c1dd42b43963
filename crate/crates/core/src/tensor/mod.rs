//! Dense tensors with reverse-mode automatic differentiation.
//!
//! `Value` is plain shape+data storage; `Tensor` is a handle to a node on a
//! [`Tape`]. Building expressions from tensors records primitive ops on the
//! tape, and `backward` on a scalar loss accumulates gradients in reverse
//! creation order. All arithmetic is double precision.

mod check;
mod kernels;
mod tape;

pub use check::grad_check;
pub use tape::{Gradients, NodeId, Tape};
pub(crate) use kernels::softmax_rows;

use serde::{Deserialize, Serialize};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::rng::randn_vec;
use tape::Op;

/// Spatial padding for convolution and pooling windows.
///
/// `Same` pads so the output extent is `ceil(extent / stride)`, splitting the
/// total padding evenly (extra cell on the high side). `Zero(p)` pads `p`
/// cells on every side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Zero(usize),
}

/// Elementwise activation kinds used by the network builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

/// Full-tensor reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    Sum,
    L1,
}

/// Batch-norm forward behaviour: training mode normalizes by batch statistics
/// (optionally folding them into running averages), evaluation mode uses the
/// stored running statistics.
pub enum BnForward<'a> {
    Train {
        running: Option<(&'a mut Vec<f64>, &'a mut Vec<f64>)>,
        decay: f64,
    },
    Eval {
        mean: &'a [f64],
        var: &'a [f64],
    },
}

/// Plain n-dimensional array: positive extents, row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct Value {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Value {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::parameter(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dimension(format!(
                "shape {shape:?} implies {numel} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    /// Matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::parameter("from_rows needs at least one row"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::dimension("rows have unequal lengths"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), d], data)
    }

    /// Gaussian-filled tensor, deterministic per rng stream.
    pub fn randn<R: rand::Rng>(shape: &[usize], mean: f64, std: f64, rng: &mut R) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: randn_vec(rng, numel, mean, std),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a tape node: immutable value plus the graph position needed for
/// gradient accumulation. Cloning shares both.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) tape: Tape,
    pub(crate) id: NodeId,
    pub(crate) value: Rc<Value>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor(id={}, shape={:?})", self.id.0, self.shape())
    }
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn value(&self) -> &Value {
        &self.value
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn item(&self) -> Result<f64> {
        self.value.item()
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// Same value as a fresh constant leaf: gradients never flow past it.
    pub fn detach(&self) -> Tensor {
        self.tape.constant((*self.value).clone())
    }

    fn check_same_tape(&self, other: &Tensor) -> Result<()> {
        if !self.tape.same_tape(&other.tape) {
            return Err(Error::contract("tensors belong to different tapes"));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    fn unary(&self, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data().iter().map(|&v| f(v)).collect();
        let value = Value::new(self.shape().to_vec(), data).expect("unary preserves shape");
        self.tape.push(op, vec![self.id], value)
    }

    fn binary_elementwise(
        &self,
        other: &Tensor,
        op: Op,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.check_same_tape(other)?;
        self.check_same_shape(other, what)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let value = Value::new(self.shape().to_vec(), data)?;
        Ok(self.tape.push(op, vec![self.id, other.id], value))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(other, Op::Add, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(other, Op::Sub, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary_elementwise(other, Op::Mul, "mul", |a, b| a * b)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::AddScalar, |v| v + c)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::MulScalar(c), |v| v * c)
    }

    /// `c - x` elementwise.
    pub fn sub_from_scalar(&self, c: f64) -> Tensor {
        self.unary(Op::SubFromScalar, |v| c - v)
    }

    pub fn square(&self) -> Tensor {
        self.mul(self).expect("same shape")
    }

    pub fn relu(&self) -> Tensor {
        self.unary(Op::Relu, |v| v.max(0.0))
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(Op::Tanh, f64::tanh)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.unary(Op::Sigmoid, |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn ln(&self) -> Tensor {
        self.unary(Op::Ln, f64::ln)
    }

    pub fn activation(&self, kind: Activation) -> Tensor {
        match kind {
            Activation::Relu => self.relu(),
            Activation::Tanh => self.tanh(),
            Activation::Identity => self.clone(),
        }
    }

    /// Standard matrix product with gradients `da = g·bᵀ`, `db = aᵀ·g`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_tape(other)?;
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(Error::dimension(format!(
                "matmul shape mismatch: {a:?} × {b:?}"
            )));
        }
        let (m, k, n) = (a[0], a[1], b[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm_nn(m, k, n, self.data(), other.data(), &mut out);
        let value = Value::new(vec![m, n], out)?;
        Ok(self.tape.push(Op::Matmul, vec![self.id, other.id], value))
    }

    /// (n,d) matrix plus a length-d bias row broadcast over rows.
    pub fn add_rows(&self, row: &Tensor) -> Result<Tensor> {
        self.check_same_tape(row)?;
        let s = self.shape();
        if s.len() != 2 || row.shape() != [s[1]] {
            return Err(Error::dimension(format!(
                "add_rows: matrix {s:?} is incompatible with row {:?}",
                row.shape()
            )));
        }
        let d = s[1];
        let mut data = self.data().to_vec();
        for chunk in data.chunks_exact_mut(d) {
            for (o, b) in chunk.iter_mut().zip(row.data()) {
                *o += b;
            }
        }
        let value = Value::new(s.to_vec(), data)?;
        Ok(self.tape.push(Op::AddRows, vec![self.id, row.id], value))
    }

    /// (...,c) tensor plus a length-c bias broadcast over the last axis.
    pub fn add_channels(&self, bias: &Tensor) -> Result<Tensor> {
        self.check_same_tape(bias)?;
        let c = *self.shape().last().expect("non-empty shape");
        if bias.shape() != [c] {
            return Err(Error::dimension(format!(
                "add_channels: input {:?} is incompatible with bias {:?}",
                self.shape(),
                bias.shape()
            )));
        }
        let mut data = self.data().to_vec();
        for chunk in data.chunks_exact_mut(c) {
            for (o, b) in chunk.iter_mut().zip(bias.data()) {
                *o += b;
            }
        }
        let value = Value::new(self.shape().to_vec(), data)?;
        Ok(self
            .tape
            .push(Op::AddChannels, vec![self.id, bias.id], value))
    }

    pub fn reduce(&self, kind: Reduce) -> Tensor {
        match kind {
            Reduce::Mean => self.mean(),
            Reduce::Sum => self.sum_all(),
            Reduce::L1 => self.l1(),
        }
    }

    /// Mean over all elements. Empty tensors are unrepresentable (`Value::new`
    /// rejects them), so the reduction is always well defined.
    pub fn mean(&self) -> Tensor {
        let m = self.data().iter().sum::<f64>() / self.numel() as f64;
        self.tape.push(Op::Mean, vec![self.id], Value::scalar(m))
    }

    pub fn sum_all(&self) -> Tensor {
        let s = self.data().iter().sum::<f64>();
        self.tape.push(Op::Sum, vec![self.id], Value::scalar(s))
    }

    /// Sum of absolute values, with subgradient 0 at exactly 0.
    pub fn l1(&self) -> Tensor {
        let s = self.data().iter().map(|v| v.abs()).sum::<f64>();
        self.tape.push(Op::L1, vec![self.id], Value::scalar(s))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || numel != self.numel() {
            return Err(Error::dimension(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape(),
                self.numel()
            )));
        }
        let value = Value::new(shape.to_vec(), self.data().to_vec())?;
        Ok(self.tape.push(Op::Reshape, vec![self.id], value))
    }

    /// Cross-correlation with kernel layout (kh,kw,cin,cout). Accepts rank-3
    /// (h,w,c) or rank-4 (n,h,w,c) inputs.
    pub fn conv2d(&self, kernel: &Tensor, stride: usize, padding: Padding) -> Result<Tensor> {
        // unfolded patch matrices up to this size stay cached for backward
        const COLS_CACHE_LIMIT: usize = 1 << 20;
        self.check_same_tape(kernel)?;
        let d = kernels::conv_dims(self.shape(), kernel.shape(), stride, padding)?;
        let cols = kernels::im2col(self.data(), &d);
        let mut out = vec![0.0; d.out_positions() * d.cout];
        kernels::gemm_nn(
            d.out_positions(),
            d.patch_len(),
            d.cout,
            &cols,
            kernel.data(),
            &mut out,
        );
        let value = Value::new(d.out_shape(), out)?;
        let cols = (cols.len() <= COLS_CACHE_LIMIT).then(|| Rc::new(cols));
        Ok(self.tape.push(
            Op::Conv2d { dims: d, cols },
            vec![self.id, kernel.id],
            value,
        ))
    }

    /// Transposed convolution: the exact adjoint of `conv2d` with
    /// `stride = up_factor` and `Same` padding, so spatial extents multiply by
    /// `up_factor`. Kernel layout is (kh,kw,c_out,c_in): the input channel
    /// count must match the kernel's *last* extent.
    pub fn deconv2d(&self, kernel: &Tensor, up_factor: usize) -> Result<Tensor> {
        self.check_same_tape(kernel)?;
        if up_factor == 0 {
            return Err(Error::parameter("deconv2d up_factor must be >= 1"));
        }
        let s = self.shape();
        let (n, hy, wy, c, batched) = match *s {
            [h, w, c] => (1, h, w, c, false),
            [n, h, w, c] => (n, h, w, c, true),
            _ => {
                return Err(Error::dimension(format!(
                    "deconv input must have rank 3 or 4, got {s:?}"
                )))
            }
        };
        let [kh, kw, c_out, c_in] = *kernel.shape() else {
            return Err(Error::dimension(format!(
                "deconv kernel must have rank 4 (kh,kw,c_out,c_in), got {:?}",
                kernel.shape()
            )));
        };
        if c_in != c {
            return Err(Error::dimension(format!(
                "deconv input channels {c} do not match kernel c_in {c_in}"
            )));
        }
        // dims of the conv this op is the adjoint of
        let x_shape: Vec<usize> = if batched {
            vec![n, hy * up_factor, wy * up_factor, c_out]
        } else {
            vec![hy * up_factor, wy * up_factor, c_out]
        };
        let d = kernels::conv_dims(
            &x_shape,
            &[kh, kw, c_out, c_in],
            up_factor,
            Padding::Same,
        )?;
        debug_assert_eq!(d.h_out, hy);
        debug_assert_eq!(d.w_out, wy);
        let out = kernels::conv_backward_input(self.data(), kernel.data(), &d);
        let value = Value::new(d.in_shape(), out)?;
        Ok(self
            .tape
            .push(Op::Deconv2d(d), vec![self.id, kernel.id], value))
    }

    /// Mean over the spatial axes of a rank-4 (n,h,w,c) tensor, giving (n,c).
    pub fn spatial_mean(&self) -> Result<Tensor> {
        let s = self.shape();
        let [n, h, w, c] = *s else {
            return Err(Error::dimension(format!(
                "spatial_mean expects rank-4 (n,h,w,c), got {s:?}"
            )));
        };
        let mut out = vec![0.0; n * c];
        for ni in 0..n {
            for e in 0..h * w {
                for j in 0..c {
                    out[ni * c + j] += self.data()[(ni * h * w + e) * c + j];
                }
            }
        }
        let scale = 1.0 / (h * w) as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
        let value = Value::new(vec![n, c], out)?;
        Ok(self.tape.push(Op::SpatialMean, vec![self.id], value))
    }

    pub fn max_pool2d(&self, kernel: usize, stride: usize, padding: Padding) -> Result<Tensor> {
        let d = kernels::pool_dims(self.shape(), kernel, stride, padding)?;
        let (out, argmax) = kernels::max_pool_forward(self.data(), &d);
        let value = Value::new(d.out_shape(), out)?;
        Ok(self
            .tape
            .push(Op::MaxPool2d { argmax }, vec![self.id], value))
    }

    /// Per-channel (last axis) normalization to zero mean and unit variance
    /// over all other axes, then affine scale/shift.
    pub fn batch_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
        mode: BnForward<'_>,
    ) -> Result<Tensor> {
        self.check_same_tape(gamma)?;
        self.check_same_tape(beta)?;
        if eps <= 0.0 {
            return Err(Error::parameter("batch_norm eps must be > 0"));
        }
        let c = *self.shape().last().expect("non-empty shape");
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::dimension(format!(
                "batch_norm channel mismatch: input has {c} channels, gamma {:?}, beta {:?}",
                gamma.shape(),
                beta.shape()
            )));
        }
        let (y, saved) = match mode {
            BnForward::Train { running, decay } => {
                let (mean, var) = kernels::channel_stats(self.data(), c);
                if let Some((rm, rv)) = running {
                    if rm.len() != c || rv.len() != c {
                        return Err(Error::dimension(
                            "running statistics length does not match channel count",
                        ));
                    }
                    for j in 0..c {
                        rm[j] = decay * rm[j] + (1.0 - decay) * mean[j];
                        rv[j] = decay * rv[j] + (1.0 - decay) * var[j];
                    }
                }
                kernels::bn_normalize(
                    self.data(),
                    c,
                    &mean,
                    &var,
                    gamma.data(),
                    beta.data(),
                    eps,
                    true,
                )
            }
            BnForward::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::dimension(
                        "running statistics length does not match channel count",
                    ));
                }
                kernels::bn_normalize(
                    self.data(),
                    c,
                    mean,
                    var,
                    gamma.data(),
                    beta.data(),
                    eps,
                    false,
                )
            }
        };
        let value = Value::new(self.shape().to_vec(), y)?;
        Ok(self.tape.push(
            Op::BatchNorm(saved),
            vec![self.id, gamma.id, beta.id],
            value,
        ))
    }

    /// Mean softmax cross-entropy of rank-2 logits against integer labels.
    pub fn softmax_cross_entropy(&self, labels: &[usize]) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::dimension(format!(
                "softmax_cross_entropy expects (n,k) logits, got {s:?}"
            )));
        }
        let (n, k) = (s[0], s[1]);
        if labels.len() != n {
            return Err(Error::data(format!(
                "{} labels for {n} logit rows",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::data(format!("label {bad} out of range 0..{k}")));
        }
        let (loss, probs) = kernels::softmax_xent(self.data(), n, k, labels);
        Ok(self.tape.push(
            Op::SoftmaxXent {
                labels: labels.to_vec(),
                probs,
            },
            vec![self.id],
            Value::scalar(loss),
        ))
    }

    /// Reverse accumulation from a scalar loss. Every node reachable from the
    /// loss receives a gradient of its own shape; unreachable nodes report
    /// exact zeros through [`Gradients::get`].
    pub fn backward(&self) -> Result<Gradients> {
        tape::run_backward(self)
    }
}
