//! Eager tape for reverse-mode differentiation.
//!
//! Every operation computes its value when it is recorded. Nodes only ever
//! reference earlier nodes, so the tape order is a topological order and
//! [`Graph::backward`] walks it in reverse.

use super::tensor::{Tensor, NORM_FLOOR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded operation together with its inputs.
///
/// Elementwise binary ops require identical shapes. "Rows" ops view a
/// tensor as a matrix whose row length is the last extent.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Constant,
    Parameter,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `(n × k) · (k × m)`.
    Matmul(NodeId, NodeId),
    /// Adds a length-`c` vector to every row of an `r × c` matrix.
    AddRow(NodeId, NodeId),
    Neg(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    /// Subgradient 0 at 0.
    Sqrt(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// Reduces the last extent: `[.., k] -> [..]` (`[k] -> [1]`).
    SumLastAxis(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    L2NormalizeRows(NodeId),
    ConcatRows(Vec<NodeId>),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    Transpose(NodeId),
    Reshape(NodeId, Vec<usize>),
    /// `q × n -> q × n × n` with `out[i, j, l] = x[i, l] - x[i, j]`.
    PairwiseDiff(NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Parameter => "parameter",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Matmul(..) => "matmul",
            Op::AddRow(..) => "add_row",
            Op::Neg(_) => "neg",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Sqrt(_) => "sqrt",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumLastAxis(_) => "sum_last_axis",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::L2NormalizeRows(_) => "l2_normalize_rows",
            Op::ConcatRows(_) => "concat_rows",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::LogSoftmaxRows(_) => "log_softmax_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::Transpose(_) => "transpose",
            Op::Reshape(..) => "reshape",
            Op::PairwiseDiff(_) => "pairwise_diff",
        }
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant | Op::Parameter => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::Neg(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sqrt(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumLastAxis(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::L2NormalizeRows(a)
            | Op::SoftmaxRows(a)
            | Op::LogSoftmaxRows(a)
            | Op::GatherRows(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a, _)
            | Op::PairwiseDiff(a) => vec![*a],
            Op::ConcatRows(xs) => xs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`]: one optional gradient per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `id`, or `None` when the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of `id`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }
}

fn mismatch(op: &'static str, shapes: &[&[usize]]) -> Error {
    Error::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn matrix_dims(t: &Tensor) -> (usize, usize) {
    let last = *t.shape().last().expect("non-empty shape");
    (t.numel() / last, last)
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    /// Number of `f64` slots held by cached node values.
    pub fn live_elements(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel()).sum()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Op::Constant, value, false)
    }

    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Op::Parameter, value, true)
    }

    fn push_leaf(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Records `op` and eagerly evaluates it.
    pub fn push(&mut self, op: Op) -> Result<NodeId> {
        let inputs = op.inputs();
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::invalid(format!(
                "{} references unknown node {}",
                op.name(),
                bad.0
            )));
        }
        let value = match &op {
            Op::Constant | Op::Parameter => {
                return Err(Error::invalid("leaf nodes are created with constant()/parameter()"))
            }
            _ => self.forward(&op)?,
        };
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        let requires_grad = inputs.iter().any(|id| self.nodes[id.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn forward(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let name = op.name();
        Ok(match op {
            Op::Constant | Op::Parameter => unreachable!(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (x, y) = (v(a), v(b));
                if x.shape() != y.shape() {
                    return Err(mismatch(name, &[x.shape(), y.shape()]));
                }
                let f: fn(f64, f64) -> f64 = match op {
                    Op::Add(..) => |p, q| p + q,
                    Op::Sub(..) => |p, q| p - q,
                    _ => |p, q| p * q,
                };
                let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            Op::Matmul(a, b) => {
                let (x, y) = (v(a), v(b));
                if x.shape().len() != 2 || y.shape().len() != 2 || x.shape()[1] != y.shape()[0] {
                    return Err(mismatch(name, &[x.shape(), y.shape()]));
                }
                let (n, k, m) = (x.shape()[0], x.shape()[1], y.shape()[1]);
                Tensor::from_parts(vec![n, m], matmul(x.data(), y.data(), n, k, m))
            }
            Op::AddRow(a, b) => {
                let (x, bias) = (v(a), v(b));
                let (_, c) = matrix_dims(x);
                if bias.numel() != c {
                    return Err(mismatch(name, &[x.shape(), bias.shape()]));
                }
                let mut data = x.data().to_vec();
                for row in data.chunks_mut(c) {
                    row.iter_mut().zip(bias.data()).for_each(|(r, b)| *r += b);
                }
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            Op::Neg(a) => v(a).map(|x| -x),
            Op::Exp(a) => v(a).map(f64::exp),
            Op::Log(a) => {
                let x = v(a);
                if let Some(bad) = x.data().iter().find(|&&p| p <= 0.0) {
                    return Err(Error::Domain {
                        op: name,
                        msg: format!("log of non-positive value {bad}"),
                    });
                }
                x.map(f64::ln)
            }
            Op::Sigmoid(a) => v(a).map(stable_sigmoid),
            Op::Relu(a) => v(a).map(|x| x.max(0.0)),
            Op::Sqrt(a) => {
                let x = v(a);
                if let Some(bad) = x.data().iter().find(|&&p| p < 0.0) {
                    return Err(Error::Domain {
                        op: name,
                        msg: format!("sqrt of negative value {bad}"),
                    });
                }
                x.map(f64::sqrt)
            }
            Op::Sum(a) => Tensor::from_parts(vec![1], vec![v(a).data().iter().sum()]),
            Op::Mean(a) => {
                let x = v(a);
                Tensor::from_parts(vec![1], vec![x.data().iter().sum::<f64>() / x.numel() as f64])
            }
            Op::SumLastAxis(a) => {
                let x = v(a);
                let (_, c) = matrix_dims(x);
                let data = x.data().chunks(c).map(|r| r.iter().sum()).collect();
                let mut shape = x.shape()[..x.shape().len() - 1].to_vec();
                if shape.is_empty() {
                    shape.push(1);
                }
                Tensor::from_parts(shape, data)
            }
            Op::Scale(a, c) => v(a).map(|x| x * c),
            Op::AddScalar(a, c) => v(a).map(|x| x + c),
            Op::L2NormalizeRows(a) => v(a).l2_normalize_rows(),
            Op::ConcatRows(xs) => {
                if xs.is_empty() {
                    return Err(Error::invalid("concat_rows needs at least one input"));
                }
                let cols = matrix_dims(v(&xs[0])).1;
                let mut rows = 0;
                let mut data = Vec::new();
                for x in xs {
                    let t = v(x);
                    let (r, c) = matrix_dims(t);
                    if c != cols {
                        return Err(mismatch(name, &[v(&xs[0]).shape(), t.shape()]));
                    }
                    rows += r;
                    data.extend_from_slice(t.data());
                }
                Tensor::from_parts(vec![rows, cols], data)
            }
            Op::SoftmaxRows(a) => {
                let x = v(a);
                let (_, c) = matrix_dims(x);
                let mut data = x.data().to_vec();
                for row in data.chunks_mut(c) {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    row.iter_mut().for_each(|p| *p = (*p - m).exp());
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= s);
                }
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            Op::LogSoftmaxRows(a) => {
                let x = v(a);
                let (_, c) = matrix_dims(x);
                let mut data = x.data().to_vec();
                for row in data.chunks_mut(c) {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|p| (p - m).exp()).sum::<f64>().ln();
                    row.iter_mut().for_each(|p| *p -= lse);
                }
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            Op::GatherRows(a, idx) => {
                let x = v(a);
                let (r, c) = matrix_dims(x);
                if idx.is_empty() {
                    return Err(Error::invalid("gather_rows with no indices"));
                }
                let mut data = Vec::with_capacity(idx.len() * c);
                for &i in idx {
                    if i >= r {
                        return Err(Error::invalid(format!("gather_rows index {i} out of {r} rows")));
                    }
                    data.extend_from_slice(&x.data()[i * c..(i + 1) * c]);
                }
                Tensor::from_parts(vec![idx.len(), c], data)
            }
            Op::Transpose(a) => {
                let x = v(a);
                if x.shape().len() != 2 {
                    return Err(mismatch(name, &[x.shape()]));
                }
                let (r, c) = (x.shape()[0], x.shape()[1]);
                Tensor::from_parts(vec![c, r], transpose(x.data(), r, c))
            }
            Op::Reshape(a, shape) => {
                let x = v(a);
                if shape.iter().product::<usize>() != x.numel() || shape.contains(&0) {
                    return Err(mismatch(name, &[x.shape(), shape]));
                }
                Tensor::from_parts(shape.clone(), x.data().to_vec())
            }
            Op::PairwiseDiff(a) => {
                let x = v(a);
                if x.shape().len() != 2 {
                    return Err(mismatch(name, &[x.shape()]));
                }
                let (q, n) = (x.shape()[0], x.shape()[1]);
                let mut data = Vec::with_capacity(q * n * n);
                for row in x.data().chunks(n) {
                    for &sj in row {
                        data.extend(row.iter().map(|&sl| sl - sj));
                    }
                }
                Tensor::from_parts(vec![q, n, n], data)
            }
        })
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The graph itself is not mutated, so repeated calls return identical
    /// gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.backward_seeded(loss, None)
    }

    /// Reverse sweep seeded with an explicit output cotangent (vector-Jacobian
    /// product). `seed` must match the shape of `output`.
    pub fn backward_with_seed(&self, output: NodeId, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return Err(mismatch("backward_with_seed", &[seed.shape(), self.value(output).shape()]));
        }
        self.backward_seeded(output, Some(seed))
    }

    fn backward_seeded(&self, output: NodeId, seed: Option<Tensor>) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::invalid(format!("unknown node {}", output.0)));
        }
        let seed = match seed {
            Some(s) => s,
            None => {
                let value = self.value(output);
                if !value.is_scalar() {
                    return Err(Error::NotScalar(value.shape().to_vec()));
                }
                Tensor::filled(value.shape(), 1.0)
            }
        };
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.into_data());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::from_parts(n.value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |id: &NodeId| &self.nodes[id.0].value;
        let wants = |id: &NodeId| self.nodes[id.0].requires_grad;
        let y = node.value.data();

        let mut acc = |id: &NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.numel()]);
            f(slot);
        };

        match &node.op {
            Op::Constant | Op::Parameter => {}
            Op::Add(a, b) => {
                acc(a, &mut |s| add_into(s, g));
                acc(b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |s| add_into(s, g));
                acc(b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let (x, z) = (val(a).data(), val(b).data());
                acc(a, &mut |s| {
                    s.iter_mut().zip(g).zip(z).for_each(|((s, g), z)| *s += g * z)
                });
                acc(b, &mut |s| {
                    s.iter_mut().zip(g).zip(x).for_each(|((s, g), x)| *s += g * x)
                });
            }
            Op::Matmul(a, b) => {
                let (x, z) = (val(a), val(b));
                let (n, k, m) = (x.shape()[0], x.shape()[1], z.shape()[1]);
                if wants(a) {
                    // dA = G · Bᵀ
                    let bt = transpose(z.data(), k, m);
                    let d = matmul(g, &bt, n, m, k);
                    acc(a, &mut |s| add_into(s, &d));
                }
                if wants(b) {
                    // dB = Aᵀ · G
                    let at = transpose(x.data(), n, k);
                    let d = matmul(&at, g, k, n, m);
                    acc(b, &mut |s| add_into(s, &d));
                }
            }
            Op::AddRow(a, b) => {
                acc(a, &mut |s| add_into(s, g));
                let c = val(b).numel();
                acc(b, &mut |s| {
                    for row in g.chunks(c) {
                        add_into(s, row);
                    }
                });
            }
            Op::Neg(a) => acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g)),
            Op::Exp(a) => acc(a, &mut |s| {
                s.iter_mut().zip(g).zip(y).for_each(|((s, g), y)| *s += g * y)
            }),
            Op::Log(a) => {
                let x = val(a).data();
                acc(a, &mut |s| {
                    s.iter_mut().zip(g).zip(x).for_each(|((s, g), x)| *s += g / x)
                })
            }
            Op::Sigmoid(a) => acc(a, &mut |s| {
                s.iter_mut()
                    .zip(g)
                    .zip(y)
                    .for_each(|((s, g), y)| *s += g * y * (1.0 - y))
            }),
            Op::Relu(a) => {
                let x = val(a).data();
                acc(a, &mut |s| {
                    s.iter_mut()
                        .zip(g)
                        .zip(x)
                        .for_each(|((s, g), x)| if *x > 0.0 { *s += g })
                })
            }
            Op::Sqrt(a) => acc(a, &mut |s| {
                s.iter_mut()
                    .zip(g)
                    .zip(y)
                    .for_each(|((s, g), y)| if *y > 0.0 { *s += 0.5 * g / y })
            }),
            Op::Sum(a) => acc(a, &mut |s| s.iter_mut().for_each(|s| *s += g[0])),
            Op::Mean(a) => {
                let n = val(a).numel() as f64;
                acc(a, &mut |s| s.iter_mut().for_each(|s| *s += g[0] / n))
            }
            Op::SumLastAxis(a) => {
                let (_, c) = matrix_dims(val(a));
                acc(a, &mut |s| {
                    for (row, g) in s.chunks_mut(c).zip(g) {
                        row.iter_mut().for_each(|s| *s += g);
                    }
                })
            }
            Op::Scale(a, c) => acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g * c)),
            Op::AddScalar(a, _) | Op::Reshape(a, _) => acc(a, &mut |s| add_into(s, g)),
            Op::L2NormalizeRows(a) => {
                let x = val(a);
                let (_, c) = matrix_dims(x);
                acc(a, &mut |s| {
                    for ((srow, xrow), (grow, yrow)) in s
                        .chunks_mut(c)
                        .zip(x.data().chunks(c))
                        .zip(g.chunks(c).zip(y.chunks(c)))
                    {
                        let norm = xrow.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm < NORM_FLOOR {
                            continue;
                        }
                        let proj: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((s, g), y) in srow.iter_mut().zip(grow).zip(yrow) {
                            *s += (g - y * proj) / norm;
                        }
                    }
                })
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for x in xs {
                    let n = val(x).numel();
                    let part = &g[offset..offset + n];
                    acc(x, &mut |s| add_into(s, part));
                    offset += n;
                }
            }
            Op::SoftmaxRows(a) => {
                let (_, c) = matrix_dims(val(a));
                acc(a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for ((s, g), y) in srow.iter_mut().zip(grow).zip(yrow) {
                            *s += y * (g - dot);
                        }
                    }
                })
            }
            Op::LogSoftmaxRows(a) => {
                let (_, c) = matrix_dims(val(a));
                acc(a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let total: f64 = grow.iter().sum();
                        for ((s, g), y) in srow.iter_mut().zip(grow).zip(yrow) {
                            *s += g - y.exp() * total;
                        }
                    }
                })
            }
            Op::GatherRows(a, idx) => {
                let (_, c) = matrix_dims(val(a));
                acc(a, &mut |s| {
                    for (&i, grow) in idx.iter().zip(g.chunks(c)) {
                        add_into(&mut s[i * c..(i + 1) * c], grow);
                    }
                })
            }
            Op::Transpose(a) => {
                let x = val(a);
                let (r, c) = (x.shape()[0], x.shape()[1]);
                let gt = transpose(g, c, r);
                acc(a, &mut |s| add_into(s, &gt))
            }
            Op::PairwiseDiff(a) => {
                let x = val(a);
                let (q, n) = (x.shape()[0], x.shape()[1]);
                acc(a, &mut |s| {
                    for i in 0..q {
                        let srow = &mut s[i * n..(i + 1) * n];
                        let block = &g[i * n * n..(i + 1) * n * n];
                        for (j, gj) in block.chunks(n).enumerate() {
                            let mut row_total = 0.0;
                            for (sl, gl) in srow.iter_mut().zip(gj) {
                                *sl += gl;
                                row_total += gl;
                            }
                            srow[j] -= row_total;
                        }
                    }
                })
            }
        }
    }

    // Convenience wrappers around `push`.

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Matmul(a, b))
    }
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow(a, bias))
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Neg(a))
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Exp(a))
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a))
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(a))
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }
    pub fn sum_last_axis(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumLastAxis(a))
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, c))
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(a, c))
    }
    pub fn l2_normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::L2NormalizeRows(a))
    }
    pub fn concat_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.push(Op::ConcatRows(xs.to_vec()))
    }
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SoftmaxRows(a))
    }
    pub fn log_softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::LogSoftmaxRows(a))
    }
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        self.push(Op::GatherRows(a, idx.to_vec()))
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.push(Op::Reshape(a, shape.to_vec()))
    }
    pub fn pairwise_diff(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::PairwiseDiff(a))
    }

    /// Elementwise product with a fixed tensor.
    pub fn mul_const(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId> {
        let m = self.constant(mask);
        self.mul(a, m)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bt = self.transpose(b)?;
        self.matmul(a, bt)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            orow.iter_mut().zip(brow).for_each(|(o, b)| *o += aip * b);
        }
    }
    out
}

fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
