use std::collections::HashMap;

use super::tensor::dot;
use super::{ParamId, ParameterStore, Shape, Tensor};
use crate::error::{Error, Result};

/// Guard added inside each norm of the cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operation kinds. Inputs are supplied separately to
/// [`Tape::apply`]; static arguments live in the variant.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `W x` with inputs `[W, x]`, or `W x + b` with inputs `[W, x, b]`.
    Affine,
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    /// Joins vectors and scalars end to end.
    Concat,
    /// Elementwise sum of any number of same-shaped inputs.
    SumVectors,
    /// Sum of all elements, producing a scalar.
    SumElements,
    Scale(f64),
    /// Adds a constant to every element.
    Shift(f64),
    Slice {
        start: usize,
        len: usize,
    },
    Softmax,
    Cosine,
    /// `(a - b)^2` elementwise.
    SquaredDiff,
    /// `Σ s_i x_i` with inputs `[s, x_1, ..., x_k]`; `s` has length `k`.
    WeightedSum,
    /// Negative log of the softmax probability assigned to the target index.
    LogLossPick(usize),
    Dot,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Affine => "affine",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "elementwise-multiply",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Concat => "concat",
            OpKind::SumVectors => "sum-of-vectors",
            OpKind::SumElements => "sum-elements",
            OpKind::Scale(_) => "scalar-scale",
            OpKind::Shift(_) => "shift",
            OpKind::Slice { .. } => "slice",
            OpKind::Softmax => "softmax",
            OpKind::Cosine => "cosine-similarity",
            OpKind::SquaredDiff => "squared-difference",
            OpKind::WeightedSum => "weighted-sum",
            OpKind::LogLossPick(_) => "log-loss-pick",
            OpKind::Dot => "dot",
        }
    }
}

#[derive(Clone, Debug)]
enum Record {
    Constant,
    Param { id: ParamId, row: Option<usize> },
    Op { kind: OpKind, inputs: Vec<NodeId> },
}

#[derive(Clone, Debug)]
struct Node {
    record: Record,
    tensor: Tensor,
    requires_grad: bool,
}

/// Per-example computation graph. Nodes are appended in evaluation order, so
/// every node's inputs precede it and reverse insertion order is a valid
/// backward schedule.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<(ParamId, Option<usize>), NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.param_nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].tensor.value
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].tensor.grad
    }

    pub fn shape(&self, id: NodeId) -> &Shape {
        &self.nodes[id.0].tensor.shape
    }

    pub fn tensor(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].tensor.value[0]
    }

    fn push(&mut self, record: Record, tensor: Tensor, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            record,
            tensor,
            requires_grad,
        });
        id
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(Record::Constant, Tensor::new(tensor.shape, tensor.value), false)
    }

    pub fn constant_vector(&mut self, values: Vec<f64>) -> NodeId {
        self.constant(Tensor::vector(values))
    }

    pub fn constant_scalar(&mut self, x: f64) -> NodeId {
        self.constant(Tensor::scalar(x))
    }

    /// Leaf holding a copy of a stored parameter. Repeated requests for the
    /// same parameter return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&(id, None)) {
            return node;
        }
        let t = store.tensor(id);
        let node = self.push(
            Record::Param { id, row: None },
            Tensor::new(t.shape.clone(), t.value.clone()),
            true,
        );
        self.param_nodes.insert((id, None), node);
        node
    }

    /// Leaf holding one row of a matrix parameter, as a vector. Used for
    /// embedding lookups so the full table never lands on the tape.
    pub fn param_row(&mut self, store: &ParameterStore, id: ParamId, row: usize) -> Result<NodeId> {
        if let Some(&node) = self.param_nodes.get(&(id, Some(row))) {
            return Ok(node);
        }
        let t = store.tensor(id);
        let (rows, cols) = t.shape.as_matrix().ok_or_else(|| Error::InvalidOp {
            op: "row-lookup",
            msg: format!("parameter `{}` is not a matrix", store.entry(id).name),
        })?;
        if row >= rows {
            return Err(Error::InvalidOp {
                op: "row-lookup",
                msg: format!("row {row} out of range for shape {}", t.shape),
            });
        }
        let values = t.value[row * cols..(row + 1) * cols].to_vec();
        let node = self.push(
            Record::Param { id, row: Some(row) },
            Tensor::vector(values),
            true,
        );
        self.param_nodes.insert((id, Some(row)), node);
        Ok(node)
    }

    /// Evaluates `kind` on `inputs` and records it.
    pub fn apply(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        let tensors: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].tensor).collect();
        let (shape, value) = forward(&kind, &tensors)?;
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        Ok(self.push(
            Record::Op {
                kind,
                inputs: inputs.to_vec(),
            },
            Tensor::new(shape, value),
            requires_grad,
        ))
    }

    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Affine, &[w, x, b])
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Affine, &[w, x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Sigmoid, &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Tanh, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Relu, &[x])
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.apply(OpKind::Concat, xs)
    }

    pub fn sum_vectors(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        self.apply(OpKind::SumVectors, xs)
    }

    pub fn sum_elements(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::SumElements, &[x])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(OpKind::Scale(c), &[x])
    }

    pub fn shift(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(OpKind::Shift(c), &[x])
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.apply(OpKind::Slice { start, len }, &[x])
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Softmax, &[x])
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Cosine, &[a, b])
    }

    pub fn squared_diff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::SquaredDiff, &[a, b])
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let mut inputs = Vec::with_capacity(items.len() + 1);
        inputs.push(weights);
        inputs.extend_from_slice(items);
        self.apply(OpKind::WeightedSum, &inputs)
    }

    pub fn log_loss_pick(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        self.apply(OpKind::LogLossPick(target), &[logits])
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(OpKind::Dot, &[a, b])
    }

    /// Fills every node's gradient with the derivative of `loss`. Gradients
    /// from earlier calls are discarded.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(Error::NonScalarLoss(shape.clone()));
        }
        for node in &mut self.nodes {
            node.tensor.zero_grad();
        }
        self.nodes[loss.0].tensor.grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Record::Op { kind, inputs } = &node.record else {
                continue;
            };
            if !node.requires_grad || node.tensor.grad.iter().all(|g| *g == 0.0) {
                continue;
            }
            let input_tensors: Vec<&Tensor> = inputs.iter().map(|j| &before[j.0].tensor).collect();
            let contributions = backward_op(kind, &input_tensors, &node.tensor);
            for (j, contribution) in inputs.iter().zip(contributions) {
                let target = &mut before[j.0];
                if !target.requires_grad {
                    continue;
                }
                for (g, c) in target.tensor.grad.iter_mut().zip(contribution) {
                    *g += c;
                }
            }
        }
        Ok(())
    }

    /// Gradients of every parameter leaf, as `(parameter, row, gradient)`.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, Option<usize>, &[f64])> {
        self.nodes.iter().filter_map(|n| match n.record {
            Record::Param { id, row } => Some((id, row, n.tensor.grad.as_slice())),
            _ => None,
        })
    }

    /// Adds `scale` times this tape's parameter gradients into the store.
    pub fn accumulate_into(&self, store: &mut ParameterStore, scale: f64) {
        for (id, row, grad) in self.param_grads() {
            let t = store.tensor_mut(id);
            let offset = match row {
                Some(r) => r * grad.len(),
                None => 0,
            };
            for (dst, g) in t.grad[offset..offset + grad.len()].iter_mut().zip(grad) {
                *dst += scale * g;
            }
        }
    }
}

fn vector_len(op: &'static str, t: &Tensor) -> Result<usize> {
    t.shape.as_vector().ok_or_else(|| Error::InvalidOp {
        op,
        msg: format!("expected a vector, got shape {}", t.shape),
    })
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::Shape {
            op,
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    Ok(())
}

fn arity(op: &'static str, inputs: &[&Tensor], n: usize) -> Result<()> {
    if inputs.len() != n {
        return Err(Error::InvalidOp {
            op,
            msg: format!("expected {n} inputs, got {}", inputs.len()),
        });
    }
    Ok(())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<(Shape, Vec<f64>)> {
    let op = kind.name();
    if inputs.is_empty() {
        return Err(Error::InvalidOp {
            op,
            msg: "no inputs".into(),
        });
    }
    let x = inputs[0];
    let unary = |f: &dyn Fn(f64) -> f64| -> Result<(Shape, Vec<f64>)> {
        arity(op, inputs, 1)?;
        Ok((x.shape.clone(), x.value.iter().map(|v| f(*v)).collect()))
    };
    let binary = |f: &dyn Fn(f64, f64) -> f64| -> Result<(Shape, Vec<f64>)> {
        arity(op, inputs, 2)?;
        same_shape(op, inputs[0], inputs[1])?;
        let y = inputs[1];
        Ok((
            x.shape.clone(),
            x.value.iter().zip(&y.value).map(|(a, b)| f(*a, *b)).collect(),
        ))
    };

    match kind {
        OpKind::Affine => {
            if !(2..=3).contains(&inputs.len()) {
                return Err(Error::InvalidOp {
                    op,
                    msg: format!("expected 2 or 3 inputs, got {}", inputs.len()),
                });
            }
            let (w, v) = (inputs[0], inputs[1]);
            let (rows, cols) = w.shape.as_matrix().ok_or_else(|| Error::InvalidOp {
                op,
                msg: format!("expected a matrix, got shape {}", w.shape),
            })?;
            if v.shape.rank() != 1 || v.len() != cols {
                return Err(Error::Shape {
                    op,
                    left: w.shape.clone(),
                    right: v.shape.clone(),
                });
            }
            let mut out: Vec<f64> = w.value.chunks_exact(cols).map(|row| dot(row, &v.value)).collect();
            if let Some(b) = inputs.get(2) {
                if b.shape != Shape::vector(rows) {
                    return Err(Error::Shape {
                        op,
                        left: w.shape.clone(),
                        right: b.shape.clone(),
                    });
                }
                out.iter_mut().zip(&b.value).for_each(|(o, bi)| *o += bi);
            }
            Ok((Shape::vector(rows), out))
        }
        OpKind::Add => binary(&|a, b| a + b),
        OpKind::Sub => binary(&|a, b| a - b),
        OpKind::Mul => binary(&|a, b| a * b),
        OpKind::SquaredDiff => binary(&|a, b| (a - b) * (a - b)),
        OpKind::Sigmoid => unary(&sigmoid),
        OpKind::Tanh => unary(&f64::tanh),
        OpKind::Relu => unary(&|v| v.max(0.0)),
        OpKind::Scale(c) => unary(&|v| c * v),
        OpKind::Shift(c) => unary(&|v| v + c),
        OpKind::Concat => {
            let mut out = Vec::new();
            for t in inputs {
                vector_len(op, t)?;
                out.extend_from_slice(&t.value);
            }
            Ok((Shape::vector(out.len()), out))
        }
        OpKind::SumVectors => {
            let mut out = x.value.clone();
            for t in &inputs[1..] {
                same_shape(op, x, t)?;
                out.iter_mut().zip(&t.value).for_each(|(o, v)| *o += v);
            }
            Ok((x.shape.clone(), out))
        }
        OpKind::SumElements => {
            arity(op, inputs, 1)?;
            Ok((Shape::scalar(), vec![x.value.iter().sum()]))
        }
        OpKind::Slice { start, len } => {
            arity(op, inputs, 1)?;
            let n = vector_len(op, x)?;
            if start + len > n || *len == 0 {
                return Err(Error::InvalidOp {
                    op,
                    msg: format!("range {start}..{} outside shape {}", start + len, x.shape),
                });
            }
            Ok((Shape::vector(*len), x.value[*start..start + len].to_vec()))
        }
        OpKind::Softmax => {
            arity(op, inputs, 1)?;
            vector_len(op, x)?;
            Ok((Shape::vector(x.len()), softmax(&x.value)))
        }
        OpKind::Cosine | OpKind::Dot => {
            arity(op, inputs, 2)?;
            let y = inputs[1];
            if x.shape.rank() != 1 || x.shape != y.shape {
                return Err(Error::Shape {
                    op,
                    left: x.shape.clone(),
                    right: y.shape.clone(),
                });
            }
            let p = dot(&x.value, &y.value);
            let out = if matches!(kind, OpKind::Dot) {
                p
            } else {
                let na = (dot(&x.value, &x.value) + COSINE_EPS).sqrt();
                let nb = (dot(&y.value, &y.value) + COSINE_EPS).sqrt();
                p / (na * nb)
            };
            Ok((Shape::scalar(), vec![out]))
        }
        OpKind::WeightedSum => {
            let k = vector_len(op, x)?;
            let items = &inputs[1..];
            if items.len() != k || k == 0 {
                return Err(Error::Shape {
                    op,
                    left: x.shape.clone(),
                    right: Shape::vector(items.len()),
                });
            }
            let first = items[0];
            let mut out = vec![0.0; first.len()];
            for (s, item) in x.value.iter().zip(items) {
                same_shape(op, first, item)?;
                out.iter_mut().zip(&item.value).for_each(|(o, v)| *o += s * v);
            }
            Ok((first.shape.clone(), out))
        }
        OpKind::LogLossPick(target) => {
            arity(op, inputs, 1)?;
            let n = vector_len(op, x)?;
            if *target >= n {
                return Err(Error::InvalidOp {
                    op,
                    msg: format!("target {target} out of range for {n} classes"),
                });
            }
            let max = x.value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + x.value.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Ok((Shape::scalar(), vec![lse - x.value[*target]]))
        }
    }
}

/// Gradient contribution for each input slot, given the output's value and
/// accumulated gradient.
fn backward_op(kind: &OpKind, inputs: &[&Tensor], out: &Tensor) -> Vec<Vec<f64>> {
    let g = &out.grad;
    let y = &out.value;
    match kind {
        OpKind::Affine => {
            let (w, v) = (inputs[0], inputs[1]);
            let cols = v.len();
            let mut gw = vec![0.0; w.len()];
            let mut gv = vec![0.0; cols];
            for (i, gi) in g.iter().enumerate() {
                if *gi == 0.0 {
                    continue;
                }
                let row = &w.value[i * cols..(i + 1) * cols];
                let grow = &mut gw[i * cols..(i + 1) * cols];
                for j in 0..cols {
                    grow[j] = gi * v.value[j];
                    gv[j] += row[j] * gi;
                }
            }
            let mut res = vec![gw, gv];
            if inputs.len() == 3 {
                res.push(g.clone());
            }
            res
        }
        OpKind::Add => vec![g.clone(), g.clone()],
        OpKind::Sub => vec![g.clone(), g.iter().map(|v| -v).collect()],
        OpKind::Mul => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            vec![
                g.iter().zip(b).map(|(gi, bi)| gi * bi).collect(),
                g.iter().zip(a).map(|(gi, ai)| gi * ai).collect(),
            ]
        }
        OpKind::SquaredDiff => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            let ga: Vec<f64> = g
                .iter()
                .zip(a.iter().zip(b))
                .map(|(gi, (ai, bi))| 2.0 * (ai - bi) * gi)
                .collect();
            let gb = ga.iter().map(|v| -v).collect();
            vec![ga, gb]
        }
        OpKind::Sigmoid => vec![g.iter().zip(y).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect()],
        OpKind::Tanh => vec![g.iter().zip(y).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect()],
        OpKind::Relu => vec![g
            .iter()
            .zip(&inputs[0].value)
            .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
            .collect()],
        OpKind::Scale(c) => vec![g.iter().map(|gi| c * gi).collect()],
        OpKind::Shift(_) => vec![g.clone()],
        OpKind::Concat => {
            let mut offset = 0;
            inputs
                .iter()
                .map(|t| {
                    let part = g[offset..offset + t.len()].to_vec();
                    offset += t.len();
                    part
                })
                .collect()
        }
        OpKind::SumVectors => inputs.iter().map(|_| g.clone()).collect(),
        OpKind::SumElements => vec![vec![g[0]; inputs[0].len()]],
        OpKind::Slice { start, len } => {
            let mut gx = vec![0.0; inputs[0].len()];
            gx[*start..start + len].copy_from_slice(g);
            vec![gx]
        }
        OpKind::Softmax => {
            let gs = dot(g, y);
            vec![y.iter().zip(g).map(|(yi, gi)| yi * (gi - gs)).collect()]
        }
        OpKind::Dot => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            vec![
                b.iter().map(|bi| g[0] * bi).collect(),
                a.iter().map(|ai| g[0] * ai).collect(),
            ]
        }
        OpKind::Cosine => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            let na2 = dot(a, a) + COSINE_EPS;
            let nb2 = dot(b, b) + COSINE_EPS;
            let (na, nb) = (na2.sqrt(), nb2.sqrt());
            let p = dot(a, b);
            let inv = 1.0 / (na * nb);
            let ga = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| g[0] * (bi * inv - p * ai * inv / na2))
                .collect();
            let gb = a
                .iter()
                .zip(b)
                .map(|(ai, bi)| g[0] * (ai * inv - p * bi * inv / nb2))
                .collect();
            vec![ga, gb]
        }
        OpKind::WeightedSum => {
            let s = &inputs[0].value;
            let items = &inputs[1..];
            let mut res = Vec::with_capacity(inputs.len());
            res.push(items.iter().map(|it| dot(g, &it.value)).collect());
            for si in s {
                res.push(g.iter().map(|gi| si * gi).collect());
            }
            res
        }
        OpKind::LogLossPick(target) => {
            let mut p = softmax(&inputs[0].value);
            p[*target] -= 1.0;
            vec![p.into_iter().map(|v| g[0] * v).collect()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.constant_vector(vec![0.0; 4]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y), &[0.5; 4]);
    }

    #[test]
    fn cosine_of_vector_with_itself() {
        let mut tape = Tape::new();
        let v = tape.constant_vector(vec![0.3, -2.0, 5.5]);
        let c = tape.cosine(v, v).unwrap();
        assert!((tape.scalar(c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_of_equal_entries_is_uniform() {
        let mut tape = Tape::new();
        let v = tape.constant_vector(vec![7.0; 3]);
        let s = tape.softmax(v).unwrap();
        close(tape.value(s), &[1.0 / 3.0; 3], 1e-15);
    }

    #[test]
    fn softmax_handles_large_inputs() {
        let s = softmax(&[1000.0, 1000.0]);
        close(&s, &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn dot_product_gradients_swap_arguments() {
        let mut store = ParameterStore::new();
        let xi = store.insert("x", Tensor::vector(vec![1.0, 2.0, 3.0]), true).unwrap();
        let yi = store.insert("y", Tensor::vector(vec![-4.0, 0.5, 2.0]), true).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, xi);
        let y = tape.param(&store, yi);
        let loss = tape.dot(x, y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), tape.value(y));
        assert_eq!(tape.grad(y), tape.value(x));
    }

    #[test]
    fn tanh_sum_gradient_at_zero_is_ones() {
        let mut store = ParameterStore::new();
        let xi = store.insert("x", Tensor::vector(vec![0.0; 5]), true).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, xi);
        let t = tape.tanh(x).unwrap();
        let loss = tape.sum_elements(t).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x), &[1.0; 5]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut store = ParameterStore::new();
        let xi = store.insert("x", Tensor::vector(vec![0.7, -1.3]), true).unwrap();

        let mut a = Tape::new();
        let x = a.param(&store, xi);
        let y = a.add(x, x).unwrap();
        let l = a.sum_elements(y).unwrap();
        a.backward(l).unwrap();

        let mut b = Tape::new();
        let x2 = b.param(&store, xi);
        let y2 = b.scale(x2, 2.0).unwrap();
        let l2 = b.sum_elements(y2).unwrap();
        b.backward(l2).unwrap();

        assert_eq!(a.value(y), b.value(y2));
        assert_eq!(a.grad(x), b.grad(x2));
        assert_eq!(a.grad(x), &[2.0, 2.0]);
    }

    #[test]
    fn affine_shape_mismatch_names_op_and_shapes() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::zeros(Shape::matrix(3, 4)));
        let x = tape.constant_vector(vec![0.0; 5]);
        let err = tape.matvec(w, x).unwrap_err().to_string();
        assert!(err.contains("affine"), "{err}");
        assert!(err.contains("[3x4]") && err.contains("[5]"), "{err}");
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.constant_vector(vec![1.0, 2.0]);
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn reset_clears_nodes() {
        let mut tape = Tape::new();
        let x = tape.constant_vector(vec![1.0]);
        tape.tanh(x).unwrap();
        tape.reset();
        assert!(tape.is_empty());
    }

    #[test]
    fn fresh_nodes_have_zero_grad() {
        let mut store = ParameterStore::new();
        let xi = store.insert("x", Tensor::vector(vec![1.0, 2.0]), true).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, xi);
        let y = tape.tanh(x).unwrap();
        assert!(tape.grad(x).iter().chain(tape.grad(y)).all(|g| *g == 0.0));
    }

    #[test]
    fn log_loss_pick_matches_negative_log_softmax() {
        let mut tape = Tape::new();
        let z = tape.constant_vector(vec![0.2, -1.0, 3.0]);
        let l = tape.log_loss_pick(z, 1).unwrap();
        let p = softmax(&[0.2, -1.0, 3.0]);
        assert!((tape.scalar(l) + p[1].ln()).abs() < 1e-12);
    }

    #[test]
    fn row_lookup_accumulates_into_matching_row() {
        let mut store = ParameterStore::new();
        let e = store
            .insert("emb", Tensor::new(Shape::matrix(3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), true)
            .unwrap();
        let mut tape = Tape::new();
        let r = tape.param_row(&store, e, 1).unwrap();
        assert_eq!(tape.value(r), &[3.0, 4.0]);
        let r2 = tape.param_row(&store, e, 1).unwrap();
        assert_eq!(r, r2);
        let s = tape.sum_elements(r).unwrap();
        tape.backward(s).unwrap();
        tape.accumulate_into(&mut store, 0.5);
        assert_eq!(store.tensor(e).grad, vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0]);
    }
}
