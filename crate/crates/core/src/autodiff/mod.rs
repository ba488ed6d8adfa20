//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only tape. Every operation pushes a node holding
//! its output value and enough information to apply the chain rule, so node
//! order is already a topological order and [`Graph::backward`] is a single
//! reverse sweep. Parameters live outside the graph; a fresh graph is built
//! for each forward pass and dropped afterwards.
//!
//! Broadcasting is deliberately narrow: the right operand of a binary op may
//! have the full shape of the left operand or any trailing suffix of it
//! (a bias of shape `[d]` against activations of shape `[n, d]`).

pub mod gradcheck;

pub use gradcheck::{gradient_check, GradCheckReport};

use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Square(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Gelu(Var),
    Relu(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Mask(Var, Vec<f64>),
    Reshape(Var),
    Transpose(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
    /// A gradient can reach a trainable leaf through this node.
    tracked: bool,
    requires_grad: bool,
}

/// The computation record: every executed operation in execution order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Accumulated gradients of `requires_grad` leaves, indexed like `nodes`.
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(Arc::new(value), false)
    }

    /// Trainable leaf whose gradient is accumulated by [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(Arc::new(value), true)
    }

    /// Leaf sharing storage with a parameter tensor held elsewhere.
    pub fn leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: requires_grad,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|i| self.nodes[i.0].tracked);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            tracked,
            requires_grad: false,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Gradient of the last backward pass(es) with respect to a trainable
    /// leaf. Leaves the loss does not depend on report zeros.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let data = self.grads[v.0]
            .clone()
            .unwrap_or_else(|| vec![0.0; node.value.numel()]);
        Some(Tensor::new(node.value.shape().to_vec(), data).expect("grad matches value"))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul of {:?} by {:?}: inner dimensions differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        let src = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), self.value(x).data().to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if len == 0 || start + len > n {
            return Err(Error::dim(format!(
                "column slice {start}..{} out of range for shape {:?}",
                start + len,
                self.shape(x)
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        Ok(self.push(Tensor::new(vec![m, len], out)?, Op::SliceCols { x, start }, &[x]))
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::dim("concat of zero tensors"))?;
        let (m, _) = self.value(first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (mi, ni) = self.value(p).dims2()?;
            if mi != m {
                return Err(Error::dim(format!(
                    "concat rows differ: {:?} vs {:?}",
                    self.shape(first),
                    self.shape(p)
                )));
            }
            widths.push(ni);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor::new(vec![m, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            parts,
        ))
    }

    // ---- elementwise ----------------------------------------------------

    fn broadcast_len(&self, a: Var, b: Var) -> Result<usize> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb {
            Ok(self.value(b).numel())
        } else {
            Err(Error::dim(format!(
                "shape {sb:?} does not broadcast against {sa:?} (trailing axes only)"
            )))
        }
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let nb = self.broadcast_len(a, b)?;
        let va = self.value(a);
        let vb = self.value(b).data();
        let out: Vec<f64> = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb[i % nb]))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), out)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().iter().any(|&v| v == 0.0) {
            return Err(Error::domain("division by zero"));
        }
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x).map(f);
        self.push(t, op, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Shift(x), |v| v + c)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.value(x).data().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::domain(format!("log of non-positive value {v}")));
        }
        Ok(self.unary(x, Op::Log(x), f64::ln))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Gelu(x), |v| gelu(v).0)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    // ---- normalization --------------------------------------------------

    /// Softmax along `axis`, stabilized by subtracting the running maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim(format!(
                "softmax axis {axis} invalid for shape {shape:?}"
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| o * len * inner + k * inner + i;
                let max = (0..len).map(|k| src[idx(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = (src[idx(k)] - max).exp();
                    out[idx(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[idx(k)] /= total;
                }
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::Softmax {
                x,
                outer,
                len,
                inner,
            },
            &[x],
        ))
    }

    /// Normalizes each row over the last axis to zero mean and unit
    /// (population) variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = shape[shape.len() - 1];
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(Error::dim(format!(
                    "layer norm affine shape {:?} does not match last axis {d}",
                    self.shape(p)
                )));
            }
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let rows = src.len() / d;
        let mut normalized = vec![0.0; src.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            inv_std[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                normalized[r * d + j] = xh;
                out[r * d + j] = xh * g[j] + b[j];
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Inverted dropout. In eval mode, or with `rate == 0`, returns `x`
    /// itself; in train mode each element is zeroed with probability `rate`
    /// and survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let out: Vec<f64> = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(t, Op::Mask(x, mask), &[x]))
    }

    // ---- reductions -----------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    // ---- backward -------------------------------------------------------

    /// Propagates d`loss`/d(node) back to every trainable leaf, adding into
    /// any gradient already accumulated there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = local[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            if node.requires_grad {
                match &mut self.grads[idx] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.propagate(idx, &g, &mut local);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], local: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let tracked = |v: Var| self.nodes[v.0].tracked;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().expect("matrix");
                let n = g.len() / m;
                if tracked(a) {
                    // dA = dY · Bᵀ
                    let bv = val(b);
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let br = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] = gi.iter().zip(br).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(local, a, ga);
                }
                if tracked(b) {
                    // dB = Aᵀ · dY
                    let av = val(a);
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = av[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let row = &mut gb[p * n..(p + 1) * n];
                            row.iter_mut().zip(gi).for_each(|(r, x)| *r += aip * x);
                        }
                    }
                    accumulate(local, b, gb);
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Add(..)) { 1.0 } else { -1.0 };
                if tracked(a) {
                    accumulate(local, a, g.to_vec());
                }
                if tracked(b) {
                    let nb = self.nodes[b.0].value.numel();
                    let mut gb = vec![0.0; nb];
                    g.iter().enumerate().for_each(|(i, v)| gb[i % nb] += sign * v);
                    accumulate(local, b, gb);
                }
            }
            &Op::Mul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let nb = bv.len();
                if tracked(a) {
                    let ga = g.iter().enumerate().map(|(i, v)| v * bv[i % nb]).collect();
                    accumulate(local, a, ga);
                }
                if tracked(b) {
                    let mut gb = vec![0.0; nb];
                    g.iter().enumerate().for_each(|(i, v)| gb[i % nb] += v * av[i]);
                    accumulate(local, b, gb);
                }
            }
            &Op::Div(a, b) => {
                let (av, bv) = (val(a), val(b));
                let nb = bv.len();
                if tracked(a) {
                    let ga = g.iter().enumerate().map(|(i, v)| v / bv[i % nb]).collect();
                    accumulate(local, a, ga);
                }
                if tracked(b) {
                    let mut gb = vec![0.0; nb];
                    g.iter().enumerate().for_each(|(i, v)| {
                        let d = bv[i % nb];
                        gb[i % nb] -= v * av[i] / (d * d);
                    });
                    accumulate(local, b, gb);
                }
            }
            &Op::Scale(x, c) => accumulate(local, x, g.iter().map(|v| v * c).collect()),
            &Op::Shift(x) | &Op::Reshape(x) => accumulate(local, x, g.to_vec()),
            &Op::Square(x) => {
                let xv = val(x);
                accumulate(local, x, g.iter().zip(xv).map(|(v, x)| 2.0 * x * v).collect());
            }
            &Op::Exp(x) => accumulate(local, x, g.iter().zip(y).map(|(v, e)| v * e).collect()),
            &Op::Log(x) => {
                let xv = val(x);
                accumulate(local, x, g.iter().zip(xv).map(|(v, x)| v / x).collect());
            }
            &Op::Softplus(x) => {
                let xv = val(x);
                accumulate(local, x, g.iter().zip(xv).map(|(v, x)| v * sigmoid(*x)).collect());
            }
            &Op::Gelu(x) => {
                let xv = val(x);
                accumulate(local, x, g.iter().zip(xv).map(|(v, x)| v * gelu(*x).1).collect());
            }
            &Op::Relu(x) => {
                let xv = val(x);
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(v, x)| if *x > 0.0 { *v } else { 0.0 })
                    .collect();
                accumulate(local, x, gx);
            }
            &Op::Softmax {
                x,
                outer,
                len,
                inner,
            } => {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |k: usize| o * len * inner + k * inner + i;
                        let dot: f64 = (0..len).map(|k| g[idx(k)] * y[idx(k)]).sum();
                        for k in 0..len {
                            gx[idx(k)] = y[idx(k)] * (g[idx(k)] - dot);
                        }
                    }
                }
                accumulate(local, x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let gv = val(*gain);
                let d = gv.len();
                let rows = g.len() / d;
                if tracked(*bias) {
                    let mut gb = vec![0.0; d];
                    g.iter().enumerate().for_each(|(i, v)| gb[i % d] += v);
                    accumulate(local, *bias, gb);
                }
                if tracked(*gain) {
                    let mut gg = vec![0.0; d];
                    g.iter()
                        .zip(normalized)
                        .enumerate()
                        .for_each(|(i, (v, xh))| gg[i % d] += v * xh);
                    accumulate(local, *gain, gg);
                }
                if tracked(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let span = r * d..(r + 1) * d;
                        let xh = &normalized[span.clone()];
                        let gxh: Vec<f64> = g[span].iter().zip(gv).map(|(a, b)| a * b).collect();
                        let m1 = gxh.iter().sum::<f64>() / d as f64;
                        let m2 = gxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[r * d + j] = inv_std[r] * (gxh[j] - m1 - xh[j] * m2);
                        }
                    }
                    accumulate(local, *x, gx);
                }
            }
            Op::Mask(x, mask) => {
                accumulate(local, *x, g.iter().zip(mask).map(|(v, m)| v * m).collect());
            }
            &Op::Transpose(x) => {
                let (m, n) = self.nodes[x.0].value.dims2().expect("matrix");
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] = g[j * m + i];
                    }
                }
                accumulate(local, x, gx);
            }
            &Op::SliceCols { x, start } => {
                let (m, n) = self.nodes[x.0].value.dims2().expect("matrix");
                let len = g.len() / m;
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    gx[i * n + start..i * n + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                accumulate(local, x, gx);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let m = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.shape()[1];
                    if tracked(p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            gp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                        }
                        accumulate(local, p, gp);
                    }
                    offset += w;
                }
            }
            &Op::Sum(x) => {
                let n = self.nodes[x.0].value.numel();
                accumulate(local, x, vec![g[0]; n]);
            }
            &Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel();
                accumulate(local, x, vec![g[0] / n as f64; n]);
            }
        }
    }
}

fn accumulate(local: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut local[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// `m×k` by `k×n` row-major product.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(br).for_each(|(r, x)| *r += aip * x);
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU and its derivative.
fn gelu(x: f64) -> (f64, f64) {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let value = 0.5 * x * (1.0 + t);
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner;
    (value, deriv)
}
