//! Define-by-run reverse-mode tape. Rebuilt on every forward pass; ops are
//! enum nodes and backward is a single reverse sweep over them.

use super::{broadcast_binary, matmul_value, Tensor};
use crate::error::{Result, StatError};
use crate::special;

/// Handle to a node on a tape.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Tid(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Tid, Tid),
    Sub(Tid, Tid),
    Mul(Tid, Tid),
    Div(Tid, Tid),
    Matmul(Tid, Tid),
    Scale(Tid, f64),
    AddScalar(Tid),
    Exp(Tid),
    Ln(Tid),
    Sqrt(Tid),
    Abs(Tid),
    Sigmoid(Tid),
    Gelu(Tid),
    SumAll(Tid),
    SumAxis(Tid, usize),
    MeanAxis(Tid, usize),
    Reshape(Tid),
    SwapAxes(Tid, usize, usize),
    SoftmaxLast(Tid),
    Narrow(Tid, usize, usize, usize),
    Concat(Vec<Tid>, usize),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients for every node of one backward sweep, indexed by Tid.
pub struct Grads {
    g: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, id: Tid) -> Option<&Tensor> {
        self.g[id.0].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: Tid) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Tid {
        self.nodes.push(Node { op, value });
        Tid(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: Tensor) -> Tid {
        self.push(Op::Leaf, t)
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = broadcast_binary(self.value(a), self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = broadcast_binary(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = broadcast_binary(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn div(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = broadcast_binary(self.value(a), self.value(b), "div", |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), v))
    }

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = matmul_value(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn scale(&mut self, a: Tid, c: f64) -> Tid {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    pub fn neg(&mut self, a: Tid) -> Tid {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Tid, c: f64) -> Tid {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), v)
    }

    pub fn exp(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln(a), v)
    }

    /// Inputs must stay strictly positive (callers add an epsilon first).
    pub fn sqrt(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn abs(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn sigmoid(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(special::sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn gelu(&mut self, a: Tid) -> Tid {
        let v = self.value(a).map(special::gelu);
        self.push(Op::Gelu(a), v)
    }

    pub fn sum_all(&mut self, a: Tid) -> Tid {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, a: Tid) -> Tid {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_axis(&mut self, a: Tid, axis: usize) -> Result<Tid> {
        let v = reduce_axis(self.value(a), axis, false)?;
        Ok(self.push(Op::SumAxis(a, axis), v))
    }

    pub fn mean_axis(&mut self, a: Tid, axis: usize) -> Result<Tid> {
        let v = reduce_axis(self.value(a), axis, true)?;
        Ok(self.push(Op::MeanAxis(a, axis), v))
    }

    /// Mean along `axis`, keeping it as extent 1 so it broadcasts back.
    pub fn mean_keepdim(&mut self, a: Tid, axis: usize) -> Result<Tid> {
        let mut shape = self.value(a).shape().to_vec();
        shape[axis] = 1;
        let m = self.mean_axis(a, axis)?;
        self.reshape(m, &shape)
    }

    pub fn reshape(&mut self, a: Tid, shape: &[usize]) -> Result<Tid> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn swap_axes(&mut self, a: Tid, ax0: usize, ax1: usize) -> Result<Tid> {
        let v = self.value(a).swap_axes(ax0, ax1)?;
        Ok(self.push(Op::SwapAxes(a, ax0, ax1), v))
    }

    pub fn narrow(&mut self, a: Tid, axis: usize, start: usize, len: usize) -> Result<Tid> {
        let v = self.value(a).narrow(axis, start, len)?;
        Ok(self.push(Op::Narrow(a, axis, start, len), v))
    }

    pub fn concat(&mut self, parts: &[Tid], axis: usize) -> Result<Tid> {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat(&vals, axis)?;
        Ok(self.push(Op::Concat(parts.to_vec(), axis), v))
    }

    /// Shift-invariant softmax along the last axis.
    pub fn softmax_last(&mut self, a: Tid) -> Tid {
        let t = self.value(a);
        let last = *t.shape().last().expect("softmax on rank >= 1");
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(last) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let v = Tensor::new(t.shape(), data).expect("same shape");
        self.push(Op::SoftmaxLast(a), v)
    }

    /// Reverse sweep from a scalar loss. Returns per-node gradients.
    pub fn backward(&self, loss: Tid) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(StatError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            // leaves keep their accumulated gradient; interior nodes give
            // theirs up once it has been pushed to their inputs
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(go) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    accumulate(&mut g, *a, go.reduce_to_shape(self.value(*a).shape()));
                    accumulate(&mut g, *b, go.reduce_to_shape(self.value(*b).shape()));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut g, *a, go.reduce_to_shape(self.value(*a).shape()));
                    let neg = go.map(|x| -x);
                    accumulate(&mut g, *b, neg.reduce_to_shape(self.value(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let da = broadcast_binary(&go, self.value(*b), "mul", |x, y| x * y)?;
                    accumulate(&mut g, *a, da.reduce_to_shape(self.value(*a).shape()));
                    let db = broadcast_binary(&go, self.value(*a), "mul", |x, y| x * y)?;
                    accumulate(&mut g, *b, db.reduce_to_shape(self.value(*b).shape()));
                }
                Op::Div(a, b) => {
                    let da = broadcast_binary(&go, self.value(*b), "div", |x, y| x / y)?;
                    accumulate(&mut g, *a, da.reduce_to_shape(self.value(*a).shape()));
                    // d(a/b)/db = -a/b^2 = -out/b
                    let t = broadcast_binary(&go, &self.nodes[i].value, "mul", |x, y| x * y)?;
                    let db = broadcast_binary(&t, self.value(*b), "div", |x, y| -x / y)?;
                    accumulate(&mut g, *b, db.reduce_to_shape(self.value(*b).shape()));
                }
                Op::Matmul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let bt = bv.swap_axes(bv.rank() - 2, bv.rank() - 1)?;
                    let da = matmul_value(&go, &bt)?;
                    accumulate(&mut g, *a, da.reduce_to_shape(av.shape()));
                    let at = av.swap_axes(av.rank() - 2, av.rank() - 1)?;
                    let db = matmul_value(&at, &go)?;
                    accumulate(&mut g, *b, db.reduce_to_shape(bv.shape()));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut g, *a, go.map(|x| c * x));
                }
                Op::AddScalar(a) => accumulate(&mut g, *a, go),
                Op::Exp(a) => {
                    let da = broadcast_binary(&go, &self.nodes[i].value, "mul", |x, y| x * y)?;
                    accumulate(&mut g, *a, da);
                }
                Op::Ln(a) => {
                    let da = broadcast_binary(&go, self.value(*a), "div", |x, y| x / y)?;
                    accumulate(&mut g, *a, da);
                }
                Op::Sqrt(a) => {
                    let da =
                        broadcast_binary(&go, &self.nodes[i].value, "div", |x, y| 0.5 * x / y)?;
                    accumulate(&mut g, *a, da);
                }
                Op::Abs(a) => {
                    let da = broadcast_binary(&go, self.value(*a), "mul", |x, y| {
                        if y > 0.0 {
                            x
                        } else if y < 0.0 {
                            -x
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut g, *a, da);
                }
                Op::Sigmoid(a) => {
                    let da = broadcast_binary(&go, &self.nodes[i].value, "mul", |x, s| {
                        x * s * (1.0 - s)
                    })?;
                    accumulate(&mut g, *a, da);
                }
                Op::Gelu(a) => {
                    let da = broadcast_binary(&go, self.value(*a), "mul", |x, y| {
                        x * special::gelu_grad(y)
                    })?;
                    accumulate(&mut g, *a, da);
                }
                Op::SumAll(a) => {
                    accumulate(&mut g, *a, Tensor::full(self.value(*a).shape(), go.item()));
                }
                Op::SumAxis(a, axis) => {
                    accumulate(&mut g, *a, expand_axis(&go, self.value(*a).shape(), *axis, 1.0));
                }
                Op::MeanAxis(a, axis) => {
                    let extent = self.value(*a).shape()[*axis] as f64;
                    accumulate(
                        &mut g,
                        *a,
                        expand_axis(&go, self.value(*a).shape(), *axis, 1.0 / extent),
                    );
                }
                Op::Reshape(a) => {
                    accumulate(&mut g, *a, go.reshape(self.value(*a).shape())?);
                }
                Op::SwapAxes(a, ax0, ax1) => {
                    accumulate(&mut g, *a, go.swap_axes(*ax0, *ax1)?);
                }
                Op::SoftmaxLast(a) => {
                    let y = &self.nodes[i].value;
                    let last = *y.shape().last().unwrap();
                    let mut dx = vec![0.0; y.len()];
                    for (r, (gr, yr)) in go
                        .data()
                        .chunks(last)
                        .zip(y.data().chunks(last))
                        .enumerate()
                    {
                        let dot: f64 = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for j in 0..last {
                            dx[r * last + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(&mut g, *a, Tensor::new(y.shape(), dx)?);
                }
                Op::Narrow(a, axis, start, len) => {
                    let src = self.value(*a).shape();
                    let mut da = Tensor::zeros(src);
                    let outer: usize = src[..*axis].iter().product();
                    let inner: usize = src[*axis + 1..].iter().product();
                    let full = src[*axis];
                    for o in 0..outer {
                        let dst_base = o * full * inner + start * inner;
                        let src_base = o * len * inner;
                        da.data_mut()[dst_base..dst_base + len * inner]
                            .copy_from_slice(&go.data()[src_base..src_base + len * inner]);
                    }
                    accumulate(&mut g, *a, da);
                }
                Op::Concat(parts, axis) => {
                    let mut start = 0usize;
                    for p in parts {
                        let extent = self.value(*p).shape()[*axis];
                        let slice = go.narrow(*axis, start, extent)?;
                        accumulate(&mut g, *p, slice);
                        start += extent;
                    }
                }
            }
        }
        Ok(Grads { g })
    }
}

fn accumulate(g: &mut [Option<Tensor>], id: Tid, delta: Tensor) {
    match &mut g[id.0] {
        Some(t) => {
            debug_assert_eq!(t.shape(), delta.shape());
            for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn reduce_axis(t: &Tensor, axis: usize, mean: bool) -> Result<Tensor> {
    if axis >= t.rank() {
        return Err(StatError::Contract(format!(
            "reduce axis {axis} out of range for shape {:?}",
            t.shape()
        )));
    }
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let mid = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape: Vec<usize> = shape.to_vec();
    out_shape.remove(axis);
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    let mut data = vec![0.0; outer * inner];
    for o in 0..outer {
        for m in 0..mid {
            let base = (o * mid + m) * inner;
            for i in 0..inner {
                data[o * inner + i] += t.data()[base + i];
            }
        }
    }
    if mean {
        let k = 1.0 / mid as f64;
        for v in &mut data {
            *v *= k;
        }
    }
    Tensor::new(&out_shape, data)
}

/// Spread a reduced gradient back along the removed axis, scaled by `k`.
fn expand_axis(go: &Tensor, target: &[usize], axis: usize, k: f64) -> Tensor {
    let mut out = Tensor::zeros(target);
    let outer: usize = target[..axis].iter().product();
    let mid = target[axis];
    let inner: usize = target[axis + 1..].iter().product();
    for o in 0..outer {
        for m in 0..mid {
            let base = (o * mid + m) * inner;
            for i in 0..inner {
                out.data_mut()[base + i] = go.data()[o * inner + i] * k;
            }
        }
    }
    out
}
