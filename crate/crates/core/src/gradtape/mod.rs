//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] is built eagerly: every builder call evaluates its node
//! immediately, so values are available while the graph grows. The tape can
//! be replayed with new leaf values ([`Tape::forward`]), differentiated
//! numerically ([`Tape::backward`]) or symbolically ([`Tape::grad_nodes`]).
//! Symbolic gradients are ordinary nodes on the same tape, so a loss built
//! from them (a gradient penalty, say) can be differentiated again.
//!
//! Non-differentiable points use the left-limit convention: `leaky-relu` and
//! `elu` take their negative-side slope at `0`, interpolation knots belong to
//! the segment on their left, and row minima/maxima send the gradient to the
//! first extremal element.

mod check;
mod ops;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

pub use check::{finite_diff_check, FdReport};
pub use ops::Op;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: DenseMatrix,
    name: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.as_slice()[0]
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match (&n.op, &n.name) {
            (Op::Leaf, Some(name)) => Some((NodeId(i), name.as_str())),
            _ => None,
        })
    }

    pub fn leaf_id(&self, name: &str) -> Option<NodeId> {
        self.leaves().find(|(_, n)| *n == name).map(|(id, _)| id)
    }

    pub fn leaf(&mut self, name: &str, value: DenseMatrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            name: Some(name.to_string()),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Constant,
            inputs: Vec::new(),
            value,
            name: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Appends a node, evaluating it immediately.
    pub fn push(&mut self, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let id = self.nodes.len();
        if matches!(op, Op::Leaf | Op::Constant) {
            return Err(Error::NodeShape {
                node: id,
                msg: "terminal nodes are created with leaf()/constant()".into(),
            });
        }
        if let Some(bad) = inputs.iter().find(|i| i.0 >= id) {
            return Err(Error::NodeShape {
                node: id,
                msg: format!("input {} does not precede the node", bad.0),
            });
        }
        let values: Vec<&DenseMatrix> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
        let value = ops::eval(&op, &values).map_err(|msg| Error::NodeShape { node: id, msg })?;
        self.nodes.push(Node {
            op,
            inputs: inputs.to_vec(),
            value,
            name: None,
        });
        Ok(NodeId(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul, &[a, b])
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose, &[a])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, &[a, b])
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Div, &[a, b])
    }
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        self.push(Op::Affine { scale, shift }, &[a])
    }
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.affine(a, factor, 0.0)
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.affine(a, -1.0, 0.0)
    }
    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        self.push(Op::LeakyRelu { slope }, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.leaky_relu(a, 0.0)
    }
    pub fn step(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Step, &[a])
    }
    pub fn elu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Elu, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Exp, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square, &[a])
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean, &[a])
    }
    pub fn col_sums(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::ColSums, &[a])
    }
    pub fn row_sums(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowSums, &[a])
    }
    pub fn repeat_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::RepeatRows { rows }, &[a])
    }
    pub fn repeat_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::RepeatCols { cols }, &[a])
    }
    pub fn broadcast_scalar(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.push(Op::BroadcastScalar { rows, cols }, &[a])
    }
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        self.push(Op::Reshape { rows, cols }, &[a])
    }
    pub fn row_norms(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowNorms, &[a])
    }
    pub fn row_min(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowMin, &[a])
    }
    pub fn row_max(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowMax, &[a])
    }
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SoftmaxRows, &[a])
    }
    pub fn bucket(&mut self, a: NodeId, bins: usize) -> Result<NodeId> {
        self.push(Op::Bucket { bins }, &[a])
    }
    pub fn search_sorted(&mut self, table: NodeId, p: NodeId) -> Result<NodeId> {
        self.push(Op::SearchSorted, &[table, p])
    }
    pub fn gather_rows(&mut self, table: NodeId, idx: NodeId) -> Result<NodeId> {
        self.push(Op::GatherRows, &[table, idx])
    }
    pub fn scatter_rows(&mut self, src: NodeId, idx: NodeId, width: usize) -> Result<NodeId> {
        self.push(Op::ScatterRows { width }, &[src, idx])
    }
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push(Op::ConcatCols, parts)
    }
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceCols { start, len }, &[a])
    }
    pub fn stop_gradient(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::StopGradient, &[a])
    }

    /// `a + b·1ᵀ` for a column `b` with the rows of `a`.
    pub fn add_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let cols = self.value(a).cols();
        let b = self.repeat_cols(col, cols)?;
        self.add(a, b)
    }

    /// `a ∘ (b·1ᵀ)`: scales row `i` of `a` by `b[i]`.
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let cols = self.value(a).cols();
        let b = self.repeat_cols(col, cols)?;
        self.mul(a, b)
    }

    /// Piecewise-linear interpolation of per-row tables. Row `i` of `table`
    /// holds values at the `l + 1` equally spaced knots `0, 1/l, …, 1`; each
    /// entry of `x` (same row count, values in `[0,1]`) is interpolated in
    /// its own row.
    pub fn linear_interp(&mut self, table: NodeId, x: NodeId) -> Result<NodeId> {
        let bins = self.value(table).cols() - 1;
        let idx = self.bucket(x, bins)?;
        let idx_next = self.affine(idx, 1.0, 1.0)?;
        let lo = self.gather_rows(table, idx)?;
        let hi = self.gather_rows(table, idx_next)?;
        let scaled = self.scale(x, bins as f64)?;
        let frac = self.sub(scaled, idx)?;
        let rise = self.sub(hi, lo)?;
        let delta = self.mul(frac, rise)?;
        self.add(lo, delta)
    }

    /// Generalized inverse of the row-wise piecewise-linear functions stored
    /// in `table` (nondecreasing, knots `k/l`). On flat segments the left
    /// end of the segment is returned.
    pub fn inverse_interp(&mut self, table: NodeId, p: NodeId) -> Result<NodeId> {
        let bins = self.value(table).cols() - 1;
        let k = self.search_sorted(table, p)?;
        let k_next = self.affine(k, 1.0, 1.0)?;
        let lo = self.gather_rows(table, k)?;
        let hi = self.gather_rows(table, k_next)?;
        let above = self.sub(p, lo)?;
        let rise = self.sub(hi, lo)?;
        let frac = self.div(above, rise)?;
        let pos = self.add(k, frac)?;
        self.scale(pos, 1.0 / bins as f64)
    }

    /// Replaces the value of a leaf (same shape) without recomputing.
    pub fn set_leaf(&mut self, id: NodeId, value: DenseMatrix) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if node.op != Op::Leaf {
            return Err(Error::NodeShape {
                node: id.0,
                msg: "not a leaf".into(),
            });
        }
        if node.value.shape() != value.shape() {
            return Err(Error::NodeShape {
                node: id.0,
                msg: format!(
                    "leaf bound to {}x{}, expected {}x{}",
                    value.rows(),
                    value.cols(),
                    node.value.rows(),
                    node.value.cols()
                ),
            });
        }
        node.value = value;
        Ok(())
    }

    pub(crate) fn leaf_value_mut(&mut self, id: NodeId) -> &mut DenseMatrix {
        &mut self.nodes[id.0].value
    }

    /// Rebinds the named leaves and recomputes every node.
    pub fn forward(&mut self, bindings: &[(&str, DenseMatrix)]) -> Result<()> {
        for (name, value) in bindings {
            let id = self.leaf_id(name).ok_or_else(|| Error::NodeShape {
                node: self.nodes.len(),
                msg: format!("no leaf named `{name}`"),
            })?;
            self.set_leaf(id, value.clone())?;
        }
        self.recompute_from(0)
    }

    /// Recomputes every non-terminal node with index `>= start`.
    pub fn recompute_from(&mut self, start: usize) -> Result<()> {
        for i in start..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf | Op::Constant) {
                continue;
            }
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            let values: Vec<&DenseMatrix> = node.inputs.iter().map(|j| &before[j.0].value).collect();
            node.value =
                ops::eval(&node.op, &values).map_err(|msg| Error::NodeShape { node: i, msg })?;
        }
        Ok(())
    }

    /// Marks nodes on a differentiable path from any of `wrt`.
    fn dependents(&self, upto: usize, wrt: &[NodeId]) -> Vec<bool> {
        let mut needed = vec![false; upto + 1];
        for w in wrt {
            if w.0 <= upto {
                needed[w.0] = true;
            }
        }
        for i in 0..=upto {
            if needed[i] {
                continue;
            }
            let node = &self.nodes[i];
            needed[i] = node
                .inputs
                .iter()
                .enumerate()
                .any(|(k, j)| node.op.differentiable_input(k) && needed[j.0]);
        }
        needed
    }

    fn require_scalar(&self, output: NodeId) -> Result<()> {
        let shape = self.value(output).shape();
        if shape != (1, 1) {
            return Err(Error::NodeShape {
                node: output.0,
                msg: format!("differentiated output must be 1x1, got {}x{}", shape.0, shape.1),
            });
        }
        Ok(())
    }

    /// Numeric gradients of the scalar `output` with respect to each node in
    /// `wrt`, in the same order.
    pub fn backward(&self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<DenseMatrix>> {
        self.require_scalar(output)?;
        let needed = self.dependents(output.0, wrt);
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(DenseMatrix::scalar(1.0));
        for i in (0..=output.0).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.inputs.is_empty() {
                let xs: Vec<&DenseMatrix> =
                    node.inputs.iter().map(|j| &self.nodes[j.0].value).collect();
                for (k, j) in node.inputs.iter().enumerate() {
                    if !node.op.differentiable_input(k) || !needed[j.0] {
                        continue;
                    }
                    let contrib = ops::vjp(&node.op, &xs, &node.value, &g, k);
                    match &mut adj[j.0] {
                        Some(acc) => acc.add_assign(&contrib)?,
                        slot @ None => *slot = Some(contrib),
                    }
                }
            }
            adj[i] = Some(g);
        }
        Ok(wrt
            .iter()
            .map(|w| {
                adj.get(w.0)
                    .and_then(|a| a.clone())
                    .unwrap_or_else(|| {
                        let v = self.value(*w);
                        DenseMatrix::zeros(v.rows(), v.cols())
                    })
            })
            .collect())
    }

    /// Gradients of `output` with respect to every named leaf.
    pub fn leaf_gradients(&self, output: NodeId) -> Result<Vec<(String, DenseMatrix)>> {
        let leaves: Vec<(NodeId, String)> =
            self.leaves().map(|(id, n)| (id, n.to_string())).collect();
        let ids: Vec<NodeId> = leaves.iter().map(|(id, _)| *id).collect();
        let grads = self.backward(output, &ids)?;
        Ok(leaves.into_iter().map(|(_, n)| n).zip(grads).collect())
    }

    /// Appends nodes computing the gradient of the scalar `output` with
    /// respect to each of `wrt` and returns their ids. The new nodes use only
    /// ops from [`Op`], so the result can be differentiated again.
    pub fn grad_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        self.require_scalar(output)?;
        let needed = self.dependents(output.0, wrt);
        let mut adj: Vec<Option<NodeId>> = vec![None; output.0 + 1];
        adj[output.0] = Some(self.constant(DenseMatrix::scalar(1.0)));
        for i in (0..=output.0).rev() {
            if !needed[i] {
                continue;
            }
            let Some(g) = adj[i] else { continue };
            let inputs = self.nodes[i].inputs.clone();
            let op = self.nodes[i].op.clone();
            for (k, j) in inputs.iter().enumerate() {
                if !op.differentiable_input(k) || !needed[j.0] {
                    continue;
                }
                let contrib = self.symbolic_vjp(NodeId(i), g, k)?;
                adj[j.0] = Some(match adj[j.0] {
                    Some(prev) => self.add(prev, contrib)?,
                    None => contrib,
                });
            }
        }
        wrt.iter()
            .map(|w| match adj.get(w.0).copied().flatten() {
                Some(id) => Ok(id),
                None => {
                    let v = self.value(*w);
                    let zeros = DenseMatrix::zeros(v.rows(), v.cols());
                    Ok(self.constant(zeros))
                }
            })
            .collect()
    }

    /// Copy of this tape extended with gradient nodes (see
    /// [`Tape::grad_nodes`]).
    pub fn grad_as_tape(&self, output: NodeId, wrt: &[NodeId]) -> Result<(Tape, Vec<NodeId>)> {
        let mut tape = self.clone();
        let ids = tape.grad_nodes(output, wrt)?;
        Ok((tape, ids))
    }

    fn symbolic_vjp(&mut self, node: NodeId, g: NodeId, which: usize) -> Result<NodeId> {
        let op = self.nodes[node.0].op.clone();
        let x = self.nodes[node.0].inputs.clone();
        let (rows, cols) = self.value(x[which]).shape();
        match op {
            Op::MatMul => {
                if which == 0 {
                    let bt = self.transpose(x[1])?;
                    self.matmul(g, bt)
                } else {
                    let at = self.transpose(x[0])?;
                    self.matmul(at, g)
                }
            }
            Op::Transpose => self.transpose(g),
            Op::Add => Ok(g),
            Op::Sub => {
                if which == 0 {
                    Ok(g)
                } else {
                    self.neg(g)
                }
            }
            Op::Mul => self.mul(g, x[1 - which]),
            Op::Div => {
                if which == 0 {
                    self.div(g, x[1])
                } else {
                    let gy = self.mul(g, node)?;
                    let q = self.div(gy, x[1])?;
                    self.neg(q)
                }
            }
            Op::Affine { scale, .. } => self.scale(g, scale),
            Op::LeakyRelu { slope } => {
                let s = self.step(x[0])?;
                let mask = self.affine(s, 1.0 - slope, slope)?;
                self.mul(g, mask)
            }
            Op::Elu => {
                let d = self.push(Op::EluDeriv, &[x[0]])?;
                self.mul(g, d)
            }
            Op::EluDeriv => {
                let s = self.step(x[0])?;
                let d = self.sub(node, s)?;
                self.mul(g, d)
            }
            Op::Tanh => {
                let sq = self.square(node)?;
                let d = self.affine(sq, -1.0, 1.0)?;
                self.mul(g, d)
            }
            Op::Exp => self.mul(g, node),
            Op::Square => {
                let twice = self.scale(x[0], 2.0)?;
                self.mul(g, twice)
            }
            Op::Sqrt => {
                let twice = self.scale(node, 2.0)?;
                self.div(g, twice)
            }
            Op::Sum => self.broadcast_scalar(g, rows, cols),
            Op::Mean => {
                let b = self.broadcast_scalar(g, rows, cols)?;
                self.scale(b, 1.0 / (rows * cols) as f64)
            }
            Op::ColSums => self.repeat_rows(g, rows),
            Op::RowSums => self.repeat_cols(g, cols),
            Op::RepeatRows { .. } => self.col_sums(g),
            Op::RepeatCols { .. } => self.row_sums(g),
            Op::BroadcastScalar { .. } => self.sum(g),
            Op::Reshape { .. } => self.reshape(g, rows, cols),
            Op::RowNorms => {
                let ratio = self.div(g, node)?;
                self.mul_col(x[0], ratio)
            }
            Op::RowMin | Op::RowMax => {
                let max = matches!(op, Op::RowMax);
                let mask = self.push(Op::RowArgMask { max }, &[x[0]])?;
                self.mul_col(mask, g)
            }
            Op::SoftmaxRows => {
                let gy = self.mul(g, node)?;
                let dot = self.row_sums(gy)?;
                let spread = self.repeat_cols(dot, cols)?;
                let centered = self.sub(g, spread)?;
                self.mul(node, centered)
            }
            Op::GatherRows => self.scatter_rows(g, x[1], cols),
            Op::ScatterRows { .. } => self.gather_rows(g, x[1]),
            Op::ConcatCols => {
                let start: usize = x[..which].iter().map(|i| self.value(*i).cols()).sum();
                self.slice_cols(g, start, cols)
            }
            Op::SliceCols { start, .. } => self.push(Op::PadCols { start, total: cols }, &[g]),
            Op::PadCols { start, .. } => self.slice_cols(g, start, cols),
            other => Err(Error::UnsupportedSecondOrder(other.name())),
        }
    }
}

#[cfg(test)]
mod tests;
