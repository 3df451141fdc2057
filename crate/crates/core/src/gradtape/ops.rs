use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::DenseMatrix;

/// Operation kinds a tape node can hold.
///
/// Every kind has an adjoint that is itself a composition of kinds from this
/// set, which is what lets [`super::Tape::grad_nodes`] differentiate a
/// gradient again. Kinds marked piecewise constant (`Step`, `RowArgMask`,
/// `Bucket`, `SearchSorted`, `StopGradient`) have zero derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Constant,
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    /// Elementwise quotient with `x / 0 = 0`.
    Div,
    /// `scale * x + shift`; plain scalar multiplication when `shift == 0`.
    Affine { scale: f64, shift: f64 },
    LeakyRelu { slope: f64 },
    /// `1` where `x > 0`, else `0`.
    Step,
    Elu,
    /// Derivative of [`Op::Elu`]: `1` where `x > 0`, else `exp(x)`.
    EluDeriv,
    Tanh,
    Exp,
    Square,
    /// Square root; its adjoint uses the `x / 0 = 0` convention at zero.
    Sqrt,
    Sum,
    Mean,
    /// Column sums, `r×c -> 1×c`.
    ColSums,
    /// Row sums, `r×c -> r×1`.
    RowSums,
    /// `1×c -> rows×c`.
    RepeatRows { rows: usize },
    /// `r×1 -> r×cols`.
    RepeatCols { cols: usize },
    /// `1×1 -> rows×cols`.
    BroadcastScalar { rows: usize, cols: usize },
    Reshape { rows: usize, cols: usize },
    /// Euclidean norm of each row, `r×c -> r×1`.
    RowNorms,
    /// Minimum of each row, `r×c -> r×1`; gradient goes to the first minimizer.
    RowMin,
    RowMax,
    /// One-hot mask of the first extremum of each row.
    RowArgMask { max: bool },
    /// Row-wise softmax.
    SoftmaxRows,
    /// Bucket index of `x ∈ [0,1]` among `bins` equal bins, left-closed at
    /// interior knots: `clamp(ceil(x·bins) − 1, 0, bins − 1)`.
    Bucket { bins: usize },
    /// For a nondecreasing table row `t[0..L]` and value `p`, the smallest
    /// `k ∈ [0, L−2]` with `t[k+1] ≥ p` (or `L − 2`).
    SearchSorted,
    /// `out[i][j] = table[i][idx[i][j]]`.
    GatherRows,
    /// Adjoint of gather: `out[i][idx[i][j]] += src[i][j]`, `width` columns.
    ScatterRows { width: usize },
    ConcatCols,
    SliceCols { start: usize, len: usize },
    /// Zero-pads a matrix into `total` columns starting at `start`.
    PadCols { start: usize, total: usize },
    StopGradient,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "elementwise-mul",
            Op::Div => "div",
            Op::Affine { .. } => "scalar-mul",
            Op::LeakyRelu { .. } => "leaky-relu",
            Op::Step => "step",
            Op::Elu => "elu",
            Op::EluDeriv => "elu-deriv",
            Op::Tanh => "tanh",
            Op::Exp => "exp",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::ColSums => "col-sums",
            Op::RowSums => "row-sums",
            Op::RepeatRows { .. } => "broadcast-row",
            Op::RepeatCols { .. } => "broadcast-col",
            Op::BroadcastScalar { .. } => "broadcast-scalar",
            Op::Reshape { .. } => "reshape",
            Op::RowNorms => "l2-norm-rows",
            Op::RowMin => "min-reduce",
            Op::RowMax => "max-reduce",
            Op::RowArgMask { .. } => "arg-mask",
            Op::SoftmaxRows => "softmax-weights",
            Op::Bucket { .. } => "bucket",
            Op::SearchSorted => "search-sorted",
            Op::GatherRows => "gather",
            Op::ScatterRows { .. } => "scatter",
            Op::ConcatCols => "concat",
            Op::SliceCols { .. } => "slice",
            Op::PadCols { .. } => "pad",
            Op::StopGradient => "stop-gradient",
        }
    }

    /// Zero derivative with respect to every input.
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(
            self,
            Op::Constant
                | Op::Leaf
                | Op::Step
                | Op::RowArgMask { .. }
                | Op::Bucket { .. }
                | Op::SearchSorted
                | Op::StopGradient
        )
    }

    /// Inputs that carry derivative information. Index inputs of gather and
    /// scatter do not.
    pub fn differentiable_input(&self, which: usize) -> bool {
        match self {
            Op::GatherRows | Op::ScatterRows { .. } => which == 0,
            _ => !self.is_piecewise_constant(),
        }
    }
}

fn same(a: &DenseMatrix, b: &DenseMatrix) -> Result<(), String> {
    if a.shape() != b.shape() {
        return Err(format!(
            "operand shapes {}x{} and {}x{} differ",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        ));
    }
    Ok(())
}

#[inline]
pub(crate) fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn arity(op: &Op, n: usize) -> Result<(), String> {
    let expected = match op {
        Op::Constant | Op::Leaf => 0,
        Op::MatMul
        | Op::Add
        | Op::Sub
        | Op::Mul
        | Op::Div
        | Op::SearchSorted
        | Op::GatherRows
        | Op::ScatterRows { .. } => 2,
        Op::ConcatCols => {
            return if n >= 1 {
                Ok(())
            } else {
                Err("concat needs at least one input".into())
            }
        }
        _ => 1,
    };
    if n != expected {
        return Err(format!("{} expects {expected} inputs, got {n}", op.name()));
    }
    Ok(())
}

pub(crate) fn row_extremum(row: &[f64], max: bool) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if (max && *v > row[best]) || (!max && *v < row[best]) {
            best = j;
        }
    }
    best
}

fn index_of(v: f64) -> usize {
    v as usize
}

/// Evaluates `op` on already-computed input values.
pub(crate) fn eval(op: &Op, x: &[&DenseMatrix]) -> Result<DenseMatrix, String> {
    arity(op, x.len())?;
    let out = match op {
        Op::Constant | Op::Leaf => unreachable!("terminal nodes are not evaluated"),
        Op::MatMul => x[0].matmul(x[1]).map_err(|e| format!("{e}"))?,
        Op::Transpose => x[0].transpose(),
        Op::Add => {
            same(x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a + b).unwrap()
        }
        Op::Sub => {
            same(x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a - b).unwrap()
        }
        Op::Mul => {
            same(x[0], x[1])?;
            x[0].zip_map(x[1], |a, b| a * b).unwrap()
        }
        Op::Div => {
            same(x[0], x[1])?;
            x[0].zip_map(x[1], safe_div).unwrap()
        }
        Op::Affine { scale, shift } => x[0].map(|v| scale * v + shift),
        Op::LeakyRelu { slope } => x[0].map(|v| if v > 0.0 { v } else { slope * v }),
        Op::Step => x[0].map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        Op::Elu => x[0].map(|v| if v > 0.0 { v } else { libm::expm1(v) }),
        Op::EluDeriv => x[0].map(|v| if v > 0.0 { 1.0 } else { libm::exp(v) }),
        Op::Tanh => x[0].map(libm::tanh),
        Op::Exp => x[0].map(libm::exp),
        Op::Square => x[0].map(|v| v * v),
        Op::Sqrt => {
            if let Some(v) = x[0].as_slice().iter().find(|v| **v < 0.0) {
                return Err(format!("sqrt of negative value {v}"));
            }
            x[0].map(libm::sqrt)
        }
        Op::Sum => DenseMatrix::scalar(x[0].sum()),
        Op::Mean => DenseMatrix::scalar(x[0].mean()),
        Op::ColSums => {
            let (r, c) = x[0].shape();
            let mut out = vec![0.0; c];
            for i in 0..r {
                for (o, v) in out.iter_mut().zip(x[0].row(i)) {
                    *o += v;
                }
            }
            DenseMatrix::from_raw(1, c, out)
        }
        Op::RowSums => {
            let r = x[0].rows();
            DenseMatrix::from_raw(r, 1, (0..r).map(|i| x[0].row(i).iter().sum()).collect())
        }
        Op::RepeatRows { rows } => {
            if x[0].rows() != 1 {
                return Err("broadcast-row expects a single row".into());
            }
            let c = x[0].cols();
            let mut out = Vec::with_capacity(rows * c);
            for _ in 0..*rows {
                out.extend_from_slice(x[0].as_slice());
            }
            DenseMatrix::from_raw(*rows, c, out)
        }
        Op::RepeatCols { cols } => {
            if x[0].cols() != 1 {
                return Err("broadcast-col expects a single column".into());
            }
            let r = x[0].rows();
            let mut out = Vec::with_capacity(r * cols);
            for i in 0..r {
                out.extend(core::iter::repeat_n(x[0].as_slice()[i], *cols));
            }
            DenseMatrix::from_raw(r, *cols, out)
        }
        Op::BroadcastScalar { rows, cols } => {
            if x[0].shape() != (1, 1) {
                return Err("broadcast-scalar expects a 1x1 input".into());
            }
            DenseMatrix::filled(*rows, *cols, x[0].as_slice()[0])
        }
        Op::Reshape { rows, cols } => x[0].reshape(*rows, *cols).map_err(|e| format!("{e}"))?,
        Op::RowNorms => {
            let r = x[0].rows();
            DenseMatrix::from_raw(
                r,
                1,
                (0..r)
                    .map(|i| libm::sqrt(x[0].row(i).iter().map(|v| v * v).sum()))
                    .collect(),
            )
        }
        Op::RowMin | Op::RowMax => {
            let max = matches!(op, Op::RowMax);
            let r = x[0].rows();
            DenseMatrix::from_raw(
                r,
                1,
                (0..r)
                    .map(|i| {
                        let row = x[0].row(i);
                        row[row_extremum(row, max)]
                    })
                    .collect(),
            )
        }
        Op::RowArgMask { max } => {
            let (r, c) = x[0].shape();
            let mut out = DenseMatrix::zeros(r, c);
            for i in 0..r {
                out[(i, row_extremum(x[0].row(i), *max))] = 1.0;
            }
            out
        }
        Op::SoftmaxRows => {
            let (r, c) = x[0].shape();
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let row = x[0].row(i);
                let m = row.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
                let start = out.len();
                let mut total = 0.0;
                for v in row {
                    let e = libm::exp(v - m);
                    total += e;
                    out.push(e);
                }
                for v in &mut out[start..] {
                    *v /= total;
                }
            }
            DenseMatrix::from_raw(r, c, out)
        }
        Op::Bucket { bins } => {
            if *bins == 0 {
                return Err("bucket needs at least one bin".into());
            }
            let top = (*bins - 1) as f64;
            x[0].map(|v| (libm::ceil(v * *bins as f64) - 1.0).clamp(0.0, top))
        }
        Op::SearchSorted => {
            let (table, p) = (x[0], x[1]);
            if table.rows() != p.rows() || table.cols() < 2 {
                return Err("search-sorted table must have the rows of the query and ≥2 columns".into());
            }
            let (r, c) = p.shape();
            let last = table.cols() - 2;
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let knots = &table.row(i)[1..];
                for &q in p.row(i) {
                    out.push(knots.partition_point(|t| *t < q).min(last) as f64);
                }
            }
            DenseMatrix::from_raw(r, c, out)
        }
        Op::GatherRows => {
            let (table, idx) = (x[0], x[1]);
            if table.rows() != idx.rows() {
                return Err("gather table and index rows differ".into());
            }
            let (r, c) = idx.shape();
            let w = table.cols();
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let row = table.row(i);
                for &k in idx.row(i) {
                    let k = index_of(k);
                    if k >= w {
                        return Err(format!("gather index {k} out of range {w}"));
                    }
                    out.push(row[k]);
                }
            }
            DenseMatrix::from_raw(r, c, out)
        }
        Op::ScatterRows { width } => {
            let (src, idx) = (x[0], x[1]);
            same(src, idx)?;
            let (r, c) = src.shape();
            let mut out = DenseMatrix::zeros(r, *width);
            for i in 0..r {
                for j in 0..c {
                    let k = index_of(idx[(i, j)]);
                    if k >= *width {
                        return Err(format!("scatter index {k} out of range {width}"));
                    }
                    out[(i, k)] += src[(i, j)];
                }
            }
            out
        }
        Op::ConcatCols => {
            let r = x[0].rows();
            if x.iter().any(|m| m.rows() != r) {
                return Err("concat inputs must share the row count".into());
            }
            let total: usize = x.iter().map(|m| m.cols()).sum();
            let mut out = Vec::with_capacity(r * total);
            for i in 0..r {
                for m in x {
                    out.extend_from_slice(m.row(i));
                }
            }
            DenseMatrix::from_raw(r, total, out)
        }
        Op::SliceCols { start, len } => {
            let (r, c) = x[0].shape();
            if start + len > c || *len == 0 {
                return Err(format!("slice {start}+{len} out of {c} columns"));
            }
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&x[0].row(i)[*start..start + len]);
            }
            DenseMatrix::from_raw(r, *len, out)
        }
        Op::PadCols { start, total } => {
            let (r, c) = x[0].shape();
            if start + c > *total {
                return Err(format!("pad {start}+{c} exceeds {total} columns"));
            }
            let mut out = DenseMatrix::zeros(r, *total);
            for i in 0..r {
                out.row_mut(i)[*start..start + c].copy_from_slice(x[0].row(i));
            }
            out
        }
        Op::StopGradient => x[0].clone(),
    };
    Ok(out)
}

/// Numeric vector-Jacobian product of `op` for input `which`, given the
/// inputs, the node's output `y` and the upstream adjoint `g`.
pub(crate) fn vjp(
    op: &Op,
    x: &[&DenseMatrix],
    y: &DenseMatrix,
    g: &DenseMatrix,
    which: usize,
) -> DenseMatrix {
    let ew = |f: &dyn Fn(f64, f64) -> f64, a: &DenseMatrix| {
        DenseMatrix::from_raw(
            a.rows(),
            a.cols(),
            a.as_slice()
                .iter()
                .zip(g.as_slice())
                .map(|(a, g)| f(*a, *g))
                .collect(),
        )
    };
    match op {
        Op::MatMul => {
            if which == 0 {
                g.matmul_t(x[1]).unwrap()
            } else {
                x[0].t_matmul(g).unwrap()
            }
        }
        Op::Transpose => g.transpose(),
        Op::Add => g.clone(),
        Op::Sub => {
            if which == 0 {
                g.clone()
            } else {
                g.scale(-1.0)
            }
        }
        Op::Mul => g.hadamard(x[1 - which]).unwrap(),
        Op::Div => {
            if which == 0 {
                g.zip_map(x[1], safe_div).unwrap()
            } else {
                let gy = g.hadamard(y).unwrap();
                gy.zip_map(x[1], |a, b| -safe_div(a, b)).unwrap()
            }
        }
        Op::Affine { scale, .. } => g.scale(*scale),
        Op::LeakyRelu { slope } => ew(&|v, g| if v > 0.0 { g } else { slope * g }, x[0]),
        Op::Elu => ew(&|v, g| if v > 0.0 { g } else { libm::exp(v) * g }, x[0]),
        Op::EluDeriv => ew(&|v, g| if v > 0.0 { 0.0 } else { libm::exp(v) * g }, x[0]),
        Op::Tanh => ew(&|t, g| (1.0 - t * t) * g, y),
        Op::Exp => ew(&|e, g| e * g, y),
        Op::Square => ew(&|v, g| 2.0 * v * g, x[0]),
        Op::Sqrt => ew(&|s, g| safe_div(g, 2.0 * s), y),
        Op::Sum => DenseMatrix::filled(x[0].rows(), x[0].cols(), g.as_slice()[0]),
        Op::Mean => DenseMatrix::filled(
            x[0].rows(),
            x[0].cols(),
            g.as_slice()[0] / x[0].len() as f64,
        ),
        Op::ColSums => eval(&Op::RepeatRows { rows: x[0].rows() }, &[g]).unwrap(),
        Op::RowSums => eval(&Op::RepeatCols { cols: x[0].cols() }, &[g]).unwrap(),
        Op::RepeatRows { .. } => eval(&Op::ColSums, &[g]).unwrap(),
        Op::RepeatCols { .. } => eval(&Op::RowSums, &[g]).unwrap(),
        Op::BroadcastScalar { .. } => DenseMatrix::scalar(g.sum()),
        Op::Reshape { .. } => g.reshape(x[0].rows(), x[0].cols()).unwrap(),
        Op::RowNorms => {
            let (r, c) = x[0].shape();
            DenseMatrix::from_fn(r, c, |i, j| x[0][(i, j)] * safe_div(g[(i, 0)], y[(i, 0)]))
        }
        Op::RowMin | Op::RowMax => {
            let max = matches!(op, Op::RowMax);
            let (r, c) = x[0].shape();
            let mut out = DenseMatrix::zeros(r, c);
            for i in 0..r {
                out[(i, row_extremum(x[0].row(i), max))] = g[(i, 0)];
            }
            out
        }
        Op::SoftmaxRows => {
            let (r, c) = y.shape();
            let mut out = Vec::with_capacity(r * c);
            for i in 0..r {
                let yr = y.row(i);
                let gr = g.row(i);
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                out.extend(yr.iter().zip(gr).map(|(a, b)| a * (b - dot)));
            }
            DenseMatrix::from_raw(r, c, out)
        }
        Op::GatherRows => eval(&Op::ScatterRows { width: x[0].cols() }, &[g, x[1]]).unwrap(),
        Op::ScatterRows { .. } => eval(&Op::GatherRows, &[g, x[1]]).unwrap(),
        Op::ConcatCols => {
            let start: usize = x[..which].iter().map(|m| m.cols()).sum();
            eval(
                &Op::SliceCols {
                    start,
                    len: x[which].cols(),
                },
                &[g],
            )
            .unwrap()
        }
        Op::SliceCols { start, .. } => eval(
            &Op::PadCols {
                start: *start,
                total: x[0].cols(),
            },
            &[g],
        )
        .unwrap(),
        Op::PadCols { start, .. } => eval(
            &Op::SliceCols {
                start: *start,
                len: x[0].cols(),
            },
            &[g],
        )
        .unwrap(),
        Op::Constant
        | Op::Leaf
        | Op::Step
        | Op::RowArgMask { .. }
        | Op::Bucket { .. }
        | Op::SearchSorted
        | Op::StopGradient => DenseMatrix::zeros(x[which].rows(), x[which].cols()),
    }
}
