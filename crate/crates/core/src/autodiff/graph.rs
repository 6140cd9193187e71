//! Dynamic tape: every primitive call appends a node holding its output and
//! whatever it needs for the backward rule. Nodes are appended in evaluation
//! order, so the node vector is already a topological order.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_COEFF: f64 = 0.044_715;
// sqrt(2 / pi)
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax {
        x: NodeId,
    },
    Gelu(NodeId),
    Transpose(NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    SelectRow {
        x: NodeId,
        row: usize,
    },
    Reshape(NodeId),
    CrossEntropy {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
    Sum(NodeId),
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to every registered parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientSet {
    grads: BTreeMap<String, Tensor>,
}

impl GradientSet {
    pub fn from_map(grads: BTreeMap<String, Tensor>) -> Self {
        Self { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|t| t.data().iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Reverse-mode tape over dense tensors. Parameters are borrowed, not copied.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: Vec<(String, NodeId)>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Registers a trainable leaf. Its gradient is reported by [`Graph::backward`]
    /// even when the loss does not depend on it (as zeros).
    pub fn param(&mut self, name: impl Into<String>, value: &'a Tensor) -> NodeId {
        let id = self.push_leaf(Cow::Borrowed(value), true);
        self.params.push((name.into(), id));
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), false)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, op: Op, value: Tensor, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value: Cow::Owned(value),
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn dims2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize)> {
        let t = self.value(id);
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(op, format!("expected a 2-D tensor, got {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        self.push("matmul", Op::MatMul(a, b), t, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add", Op::Add(a, b), t, &[a, b])
    }

    /// `x[i, j] + bias[j]`; the only broadcasting rule the engine supports.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.dims2("add_bias", x)?;
        let tb = self.value(bias);
        if tb.shape() != [cols] {
            return Err(Error::shape("add_bias", format!("[{rows}x{cols}] + {:?}", tb.shape())));
        }
        let b = tb.data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_exact_mut(cols) {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        self.push("add_bias", Op::AddBias(x, bias), t, &[x, bias])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("mul", Op::Mul(a, b), t, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("scale", Op::Scale(x, factor), t, &[x])
    }

    /// Rows of `table` selected by `ids`, giving `[ids.len() x cols]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.dims2("gather", table)?;
        if ids.is_empty() {
            return Err(Error::shape("gather", "no rows requested"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Index(format!("gather: row {bad} of a {rows}-row table")));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::new(vec![ids.len(), cols], data)?;
        let op = Op::Gather {
            table,
            ids: ids.to_vec(),
        };
        self.push("gather", op, t, &[table])
    }

    /// Row-wise layer normalisation with learned scale and shift.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.dims2("layer_norm", x)?;
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.shape() != [cols] || tb.shape() != [cols] {
            return Err(Error::shape(
                "layer_norm",
                format!("input [{rows}x{cols}], gamma {:?}, beta {:?}", tg.shape(), tb.shape()),
            ));
        }
        let (g, b) = (tg.data(), tb.data());
        let src = self.value(x).data();
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(vec![rows, cols], out)?;
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        self.push("layer_norm", op, t, &[x, gamma, beta])
    }

    /// Row-wise softmax. With `causal`, row `i` only spans columns `0..=i`
    /// and the masked entries are exactly zero.
    pub fn softmax(&mut self, x: NodeId, causal: bool) -> Result<NodeId> {
        let tx = self.value(x);
        let (rows, cols) = tx
            .dims2()
            .ok_or_else(|| Error::shape("softmax", format!("expected 1-D or 2-D, got {:?}", tx.shape())))?;
        if causal && rows > cols {
            return Err(Error::shape("softmax", format!("causal mask needs rows <= cols, got [{rows}x{cols}]")));
        }
        let src = tx.data();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let width = if causal { r + 1 } else { cols };
            let row = &src[r * cols..r * cols + width];
            let dst = &mut out[r * cols..r * cols + width];
            softmax_into(row, dst);
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        self.push("softmax", Op::Softmax { x }, t, &[x])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| gelu(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        self.push("gelu", Op::Gelu(x), t, &[x])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.dims2("transpose", x)?;
        let src = self.value(x).data();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = src[r * cols + c];
            }
        }
        let t = Tensor::new(vec![cols, rows], data)?;
        self.push("transpose", Op::Transpose(x), t, &[x])
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, cols) = self.dims2("slice_cols", x)?;
        if len == 0 || start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of [{rows}x{cols}]", start + len),
            ));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        self.push("slice_cols", Op::SliceCols { x, start }, t, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let (rows, _) = self.dims2("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2("concat_cols", p)?;
            if r != rows {
                return Err(Error::shape("concat_cols", format!("row count {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        self.push("concat_cols", Op::ConcatCols(parts.to_vec()), t, parts)
    }

    /// Row `row` of a 2-D tensor as a `[1 x cols]` tensor.
    pub fn select_row(&mut self, x: NodeId, row: usize) -> Result<NodeId> {
        let (rows, cols) = self.dims2("select_row", x)?;
        if row >= rows {
            return Err(Error::Index(format!("select_row: row {row} of {rows}")));
        }
        let data = self.value(x).data()[row * cols..(row + 1) * cols].to_vec();
        let t = Tensor::new(vec![1, cols], data)?;
        self.push("select_row", Op::SelectRow { x, row }, t, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push("reshape", Op::Reshape(x), t, &[x])
    }

    /// `-log softmax(logits)[target]` for a single logit vector (`[V]` or `[1 x V]`).
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let tl = self.value(logits);
        match tl.dims2() {
            Some((1, _)) => {}
            _ => {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("expected a single logit vector, got {:?}", tl.shape()),
                ))
            }
        }
        let z = tl.data();
        if target >= z.len() {
            return Err(Error::Index(format!(
                "cross_entropy: target {target} with vocabulary {}",
                z.len()
            )));
        }
        let mut probs = vec![0.0; z.len()];
        softmax_into(z, &mut probs);
        let loss = nll(z, target);
        let op = Op::CrossEntropy {
            logits,
            target,
            probs,
        };
        self.push("cross_entropy", op, Tensor::scalar(loss), &[logits])
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Op::Sum(x), Tensor::scalar(s), &[x])
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<GradientSet> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_deref() else {
                continue;
            };
            self.propagate(node, g, lower);
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.params {
            let value = self.value(*id);
            let grad = match grads.get_mut(id.0).and_then(Option::take) {
                Some(data) => Tensor::new(value.shape().to_vec(), data)?,
                None => Tensor::zeros(value.shape()),
            };
            if !grad.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
            out.insert(name.clone(), grad);
        }
        Ok(GradientSet::from_map(out))
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("checked in forward");
                let n = out.shape()[1];
                if self.wants(*a) {
                    let bv = self.value(*b).data();
                    self.accumulate(grads, *a, |da| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                da[i * k + p] += dot(grow, brow);
                            }
                        }
                    });
                }
                if self.wants(*b) {
                    let av = self.value(*a).data();
                    self.accumulate(grads, *b, |db| {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = av[i * k + p];
                                if aip != 0.0 {
                                    axpy(aip, grow, &mut db[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                for x in [a, b] {
                    if self.wants(*x) {
                        self.accumulate(grads, *x, |dx| axpy(1.0, g, dx));
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, |dx| axpy(1.0, g, dx));
                }
                if self.wants(*bias) {
                    let cols = self.value(*bias).len();
                    self.accumulate(grads, *bias, |db| {
                        for row in g.chunks_exact(cols) {
                            axpy(1.0, row, db);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bv = self.value(*b).data();
                    self.accumulate(grads, *a, |da| {
                        for ((d, gi), bi) in da.iter_mut().zip(g).zip(bv) {
                            *d += gi * bi;
                        }
                    });
                }
                if self.wants(*b) {
                    let av = self.value(*a).data();
                    self.accumulate(grads, *b, |db| {
                        for ((d, gi), ai) in db.iter_mut().zip(g).zip(av) {
                            *d += gi * ai;
                        }
                    });
                }
            }
            Op::Scale(x, factor) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, |dx| axpy(*factor, g, dx));
                }
            }
            Op::Gather { table, ids } => {
                if self.wants(*table) {
                    let cols = out.shape()[1];
                    self.accumulate(grads, *table, |dt| {
                        for (r, &id) in ids.iter().enumerate() {
                            axpy(1.0, &g[r * cols..(r + 1) * cols], &mut dt[id * cols..(id + 1) * cols]);
                        }
                    });
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let cols = self.value(*gamma).len();
                if self.wants(*beta) {
                    self.accumulate(grads, *beta, |db| {
                        for row in g.chunks_exact(cols) {
                            axpy(1.0, row, db);
                        }
                    });
                }
                if self.wants(*gamma) {
                    self.accumulate(grads, *gamma, |dg| {
                        for (grow, hrow) in g.chunks_exact(cols).zip(xhat.chunks_exact(cols)) {
                            for ((d, gi), hi) in dg.iter_mut().zip(grow).zip(hrow) {
                                *d += gi * hi;
                            }
                        }
                    });
                }
                if self.wants(*x) {
                    let gv = self.value(*gamma).data();
                    let m = cols as f64;
                    self.accumulate(grads, *x, |dx| {
                        let rows = g.len() / cols;
                        let mut dh = vec![0.0; cols];
                        for r in 0..rows {
                            let grow = &g[r * cols..(r + 1) * cols];
                            let hrow = &xhat[r * cols..(r + 1) * cols];
                            for c in 0..cols {
                                dh[c] = grow[c] * gv[c];
                            }
                            let sum_dh: f64 = dh.iter().sum();
                            let sum_dh_h = dot(&dh, hrow);
                            let scale = inv_std[r] / m;
                            let drow = &mut dx[r * cols..(r + 1) * cols];
                            for c in 0..cols {
                                drow[c] += scale * (m * dh[c] - sum_dh - hrow[c] * sum_dh_h);
                            }
                        }
                    });
                }
            }
            Op::Softmax { x } => {
                if self.wants(*x) {
                    let (_, cols) = out.dims2().expect("checked in forward");
                    let y = out.data();
                    self.accumulate(grads, *x, |dx| {
                        for ((drow, grow), yrow) in dx
                            .chunks_exact_mut(cols)
                            .zip(g.chunks_exact(cols))
                            .zip(y.chunks_exact(cols))
                        {
                            let s = dot(grow, yrow);
                            for ((d, gi), yi) in drow.iter_mut().zip(grow).zip(yrow) {
                                *d += yi * (gi - s);
                            }
                        }
                    });
                }
            }
            Op::Gelu(x) => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    self.accumulate(grads, *x, |dx| {
                        for ((d, gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                            *d += gi * gelu_grad(xi);
                        }
                    });
                }
            }
            Op::Transpose(x) => {
                if self.wants(*x) {
                    let (rows, cols) = self.value(*x).dims2().expect("checked in forward");
                    self.accumulate(grads, *x, |dx| {
                        for r in 0..rows {
                            for c in 0..cols {
                                dx[r * cols + c] += g[c * rows + r];
                            }
                        }
                    });
                }
            }
            Op::SliceCols { x, start } => {
                if self.wants(*x) {
                    let (rows, cols) = self.value(*x).dims2().expect("checked in forward");
                    let len = out.shape()[1];
                    self.accumulate(grads, *x, |dx| {
                        for r in 0..rows {
                            axpy(
                                1.0,
                                &g[r * len..(r + 1) * len],
                                &mut dx[r * cols + start..r * cols + start + len],
                            );
                        }
                    });
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = out.dims2().expect("checked in forward");
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if self.wants(p) {
                        self.accumulate(grads, p, |dp| {
                            for r in 0..rows {
                                axpy(
                                    1.0,
                                    &g[r * total + offset..r * total + offset + w],
                                    &mut dp[r * w..(r + 1) * w],
                                );
                            }
                        });
                    }
                    offset += w;
                }
            }
            Op::SelectRow { x, row } => {
                if self.wants(*x) {
                    let cols = g.len();
                    self.accumulate(grads, *x, |dx| {
                        axpy(1.0, g, &mut dx[row * cols..(row + 1) * cols]);
                    });
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, |dx| axpy(1.0, g, dx));
                }
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                if self.wants(*logits) {
                    let scale = g[0];
                    self.accumulate(grads, *logits, |dz| {
                        for (i, (d, p)) in dz.iter_mut().zip(probs).enumerate() {
                            let onehot = if i == *target { 1.0 } else { 0.0 };
                            *d += scale * (p - onehot);
                        }
                    });
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let s = g[0];
                    self.accumulate(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += s));
                }
            }
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], id: NodeId, f: impl FnOnce(&mut [f64])) {
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
        f(slot);
    }
}

/// `out += a * b` for row-major `[m x k] * [k x n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                axpy(aip, &b[p * n..(p + 1) * n], row);
            }
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(sum(exp(z)))`, accurate when one entry dominates.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let (max, tail) = log_sum_exp_parts(z);
    max + tail
}

/// `-log softmax(z)[target]`, kept accurate near zero loss.
pub(crate) fn nll(z: &[f64], target: usize) -> f64 {
    let (max, tail) = log_sum_exp_parts(z);
    (max - z[target]) + tail
}

/// `(max(z), ln(sum(exp(z - max))))`
fn log_sum_exp_parts(z: &[f64]) -> (f64, f64) {
    let (arg, max) = z
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg)
        .map(|(_, v)| (v - max).exp())
        .sum();
    (max, rest.ln_1p())
}

pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn gelu(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_SCALE * (x + GELU_COEFF * x * x * x);
    let t = u.tanh();
    let du = GELU_SCALE * (1.0 + 3.0 * GELU_COEFF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
