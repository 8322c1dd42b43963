//! The differentiation tape: an append-only list of primitive records whose
//! ids form a DAG in creation order, plus the reverse accumulation pass.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};

use super::kernels::{self, BnSaved, ConvDims, POOL_EMPTY};
use super::{Tensor, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Primitive record kinds. Variants carry whatever the backward pass needs
/// beyond the input and output values themselves.
pub(crate) enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    AddScalar,
    MulScalar(f64),
    SubFromScalar,
    Relu,
    Tanh,
    Sigmoid,
    Ln,
    Matmul,
    /// (n,d) matrix plus a length-d row vector broadcast over rows.
    AddRows,
    /// (...,c) tensor plus a length-c vector broadcast over the last axis.
    AddChannels,
    Mean,
    Sum,
    L1,
    Reshape,
    /// Small unfolded-patch matrices are kept from the forward pass so the
    /// kernel gradient can reuse them; large ones are rebuilt on demand to
    /// bound tape memory.
    Conv2d {
        dims: ConvDims,
        cols: Option<Rc<Vec<f64>>>,
    },
    /// Dims describe the underlying forward convolution; the node input is
    /// that convolution's output side.
    Deconv2d(ConvDims),
    MaxPool2d { argmax: Vec<usize> },
    /// (n,h,w,c) → (n,c) mean over the spatial axes.
    SpatialMean,
    BatchNorm(BnSaved),
    SoftmaxXent { labels: Vec<usize>, probs: Vec<f64> },
}

pub(crate) struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub value: Rc<Value>,
    pub needs_grad: bool,
}

/// Shared handle to the node list. Cloning the handle is cheap; all tensors
/// created through it append to the same record.
#[derive(Clone, Default)]
pub struct Tape {
    pub(crate) nodes: Rc<RefCell<Vec<Node>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    pub(crate) fn push(&self, op: Op, inputs: Vec<NodeId>, value: Value) -> Tensor {
        let needs_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|id| nodes[id.0].needs_grad)
        };
        self.push_with_grad(op, inputs, value, needs_grad)
    }

    pub(crate) fn push_with_grad(
        &self,
        op: Op,
        inputs: Vec<NodeId>,
        value: Value,
        needs_grad: bool,
    ) -> Tensor {
        let value = Rc::new(value);
        let id = {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                op,
                inputs,
                value: Rc::clone(&value),
                needs_grad,
            });
            NodeId(nodes.len() - 1)
        };
        Tensor {
            tape: self.clone(),
            id,
            value,
        }
    }

    /// New leaf tensor. Only leaves with `requires_grad` become
    /// differentiation targets.
    pub fn leaf(&self, value: Value, requires_grad: bool) -> Tensor {
        self.push_with_grad(Op::Leaf, Vec::new(), value, requires_grad)
    }

    /// Leaf with `requires_grad = true`.
    pub fn var(&self, value: Value) -> Tensor {
        self.leaf(value, true)
    }

    /// Leaf with `requires_grad = false`.
    pub fn constant(&self, value: Value) -> Tensor {
        self.leaf(value, false)
    }
}

/// Node id → gradient map produced by `Tensor::backward`. Nodes the loss does
/// not depend on report an exactly-zero gradient.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `t`, shaped like `t`.
    pub fn get(&self, t: &Tensor) -> Value {
        match self.grads.get(t.id.0).and_then(|g| g.as_ref()) {
            Some(g) => Value::new(t.shape().to_vec(), g.clone()).expect("gradient shape"),
            None => Value::zeros(t.shape()),
        }
    }

    /// Raw gradient data if the node was reached by the backward sweep.
    pub fn get_reached(&self, t: &Tensor) -> Option<&[f64]> {
        self.grads
            .get(t.id.0)
            .and_then(|g| g.as_deref())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn run_backward(loss: &Tensor) -> Result<Gradients> {
    if loss.numel() != 1 {
        return Err(Error::contract(format!(
            "backward requires a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    let nodes = loss.tape.nodes.borrow();
    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
    grads.resize_with(nodes.len(), || None);
    if nodes[loss.id.0].needs_grad {
        grads[loss.id.0] = Some(vec![1.0]);
    }

    for id in (0..=loss.id.0).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &nodes[id];
        let needs = |i: usize| nodes[node.inputs[i].0].needs_grad;
        let input_value = |i: usize| -> &Value { &nodes[node.inputs[i].0].value };
        match &node.op {
            Op::Leaf => {}
            Op::Add => {
                for i in 0..2 {
                    if needs(i) {
                        let s = slot(&mut grads, node.inputs[i], g.len());
                        for (o, gv) in s.iter_mut().zip(&g) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Sub => {
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o -= gv;
                    }
                }
            }
            Op::Mul => {
                let a = input_value(0).data();
                let b = input_value(1).data();
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for ((o, gv), bv) in s.iter_mut().zip(&g).zip(b) {
                        *o += gv * bv;
                    }
                }
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], g.len());
                    for ((o, gv), av) in s.iter_mut().zip(&g).zip(a) {
                        *o += gv * av;
                    }
                }
            }
            Op::AddScalar => {
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
            }
            Op::MulScalar(c) => {
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += c * gv;
                    }
                }
            }
            Op::SubFromScalar => {
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o -= gv;
                    }
                }
            }
            Op::Relu => {
                if needs(0) {
                    let x = input_value(0).data();
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for ((o, gv), xv) in s.iter_mut().zip(&g).zip(x) {
                        if *xv > 0.0 {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Tanh => {
                if needs(0) {
                    let y = node.value.data();
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for ((o, gv), yv) in s.iter_mut().zip(&g).zip(y) {
                        *o += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid => {
                if needs(0) {
                    let y = node.value.data();
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for ((o, gv), yv) in s.iter_mut().zip(&g).zip(y) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Ln => {
                if needs(0) {
                    let x = input_value(0).data();
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for ((o, gv), xv) in s.iter_mut().zip(&g).zip(x) {
                        *o += gv / xv;
                    }
                }
            }
            Op::Matmul => {
                let a = input_value(0);
                let b = input_value(1);
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                let (a_data, b_data) = (a.data(), b.data());
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], m * k);
                    kernels::gemm_nt_acc(m, n, k, &g, b_data, s);
                }
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], k * n);
                    kernels::gemm_tn_acc(k, m, n, a_data, &g, s);
                }
            }
            Op::AddRows => {
                let d = input_value(1).numel();
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], d);
                    for row in g.chunks_exact(d) {
                        for (o, gv) in s.iter_mut().zip(row) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::AddChannels => {
                let c = input_value(1).numel();
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], c);
                    for row in g.chunks_exact(c) {
                        for (o, gv) in s.iter_mut().zip(row) {
                            *o += gv;
                        }
                    }
                }
            }
            Op::Mean => {
                if needs(0) {
                    let n = input_value(0).numel();
                    let gv = g[0] / n as f64;
                    let s = slot(&mut grads, node.inputs[0], n);
                    for o in s.iter_mut() {
                        *o += gv;
                    }
                }
            }
            Op::Sum => {
                if needs(0) {
                    let n = input_value(0).numel();
                    let s = slot(&mut grads, node.inputs[0], n);
                    for o in s.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::L1 => {
                if needs(0) {
                    let x = input_value(0).data();
                    let s = slot(&mut grads, node.inputs[0], x.len());
                    for (o, xv) in s.iter_mut().zip(x) {
                        // subgradient 0 at exactly 0
                        *o += g[0] * xv.signum() * f64::from(*xv != 0.0);
                    }
                }
            }
            Op::Reshape => {
                if needs(0) {
                    let s = slot(&mut grads, node.inputs[0], g.len());
                    for (o, gv) in s.iter_mut().zip(&g) {
                        *o += gv;
                    }
                }
            }
            Op::Conv2d { dims: d, cols } => {
                let k = input_value(1).data();
                if needs(0) {
                    let gx = kernels::conv_backward_input(&g, k, d);
                    let s = slot(&mut grads, node.inputs[0], gx.len());
                    for (o, gv) in s.iter_mut().zip(&gx) {
                        *o += gv;
                    }
                }
                if needs(1) {
                    let rebuilt;
                    let cols: &[f64] = match cols {
                        Some(c) => c,
                        None => {
                            rebuilt = kernels::im2col(input_value(0).data(), d);
                            &rebuilt
                        }
                    };
                    let s = slot(&mut grads, node.inputs[1], d.patch_len() * d.cout);
                    kernels::gemm_tn_acc(d.patch_len(), d.out_positions(), d.cout, cols, &g, s);
                }
            }
            Op::Deconv2d(d) => {
                let y = input_value(0).data();
                let k = input_value(1).data();
                if needs(0) {
                    // forward was the conv adjoint, so its gradient is the conv
                    let gy = kernels::conv_forward(&g, k, d);
                    let s = slot(&mut grads, node.inputs[0], gy.len());
                    for (o, gv) in s.iter_mut().zip(&gy) {
                        *o += gv;
                    }
                }
                if needs(1) {
                    let gk = kernels::conv_backward_kernel(&g, y, d);
                    let s = slot(&mut grads, node.inputs[1], gk.len());
                    for (o, gv) in s.iter_mut().zip(&gk) {
                        *o += gv;
                    }
                }
            }
            Op::MaxPool2d { argmax } => {
                if needs(0) {
                    let n = input_value(0).numel();
                    let s = slot(&mut grads, node.inputs[0], n);
                    for (src, gv) in argmax.iter().zip(&g) {
                        if *src != POOL_EMPTY {
                            s[*src] += gv;
                        }
                    }
                }
            }
            Op::SpatialMean => {
                if needs(0) {
                    let shape = input_value(0).shape();
                    let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
                    let scale = 1.0 / (h * w) as f64;
                    let s = slot(&mut grads, node.inputs[0], n * h * w * c);
                    for ni in 0..n {
                        for e in 0..h * w {
                            for j in 0..c {
                                s[(ni * h * w + e) * c + j] += g[ni * c + j] * scale;
                            }
                        }
                    }
                }
            }
            Op::BatchNorm(saved) => {
                let gamma = input_value(1).data();
                let c = gamma.len();
                let rows = saved.rows as f64;
                if needs(1) {
                    let s = slot(&mut grads, node.inputs[1], c);
                    for (r, row) in g.chunks_exact(c).enumerate() {
                        for (j, gv) in row.iter().enumerate() {
                            s[j] += gv * saved.xhat[r * c + j];
                        }
                    }
                }
                if needs(2) {
                    let s = slot(&mut grads, node.inputs[2], c);
                    for row in g.chunks_exact(c) {
                        for (o, gv) in s.iter_mut().zip(row) {
                            *o += gv;
                        }
                    }
                }
                if needs(0) {
                    if saved.training {
                        let mut sum_g = vec![0.0; c];
                        let mut sum_gx = vec![0.0; c];
                        for (r, row) in g.chunks_exact(c).enumerate() {
                            for (j, gv) in row.iter().enumerate() {
                                sum_g[j] += gv;
                                sum_gx[j] += gv * saved.xhat[r * c + j];
                            }
                        }
                        let s = slot(&mut grads, node.inputs[0], g.len());
                        for (e, gv) in g.iter().enumerate() {
                            let j = e % c;
                            s[e] += gamma[j]
                                * saved.inv_std[j]
                                * (gv - sum_g[j] / rows - saved.xhat[e] * sum_gx[j] / rows);
                        }
                    } else {
                        let s = slot(&mut grads, node.inputs[0], g.len());
                        for (e, gv) in g.iter().enumerate() {
                            let j = e % c;
                            s[e] += gamma[j] * saved.inv_std[j] * gv;
                        }
                    }
                }
            }
            Op::SoftmaxXent { labels, probs } => {
                if needs(0) {
                    let n = labels.len();
                    let k = probs.len() / n;
                    let scale = g[0] / n as f64;
                    let s = slot(&mut grads, node.inputs[0], probs.len());
                    for (i, &label) in labels.iter().enumerate() {
                        for j in 0..k {
                            let onehot = f64::from(j == label);
                            s[i * k + j] += scale * (probs[i * k + j] - onehot);
                        }
                    }
                }
            }
        }
        grads[id] = Some(g);
    }
    Ok(Gradients { grads })
}
