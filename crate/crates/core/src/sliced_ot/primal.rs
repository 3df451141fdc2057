use alloc::vec::Vec;

use super::histogram::{cdf_from_pdf, check_hist_params, rescale_unit, soft_histogram, PiecewiseCdf, DEGENERATE_RANGE};
use crate::error::{shape_err, Result};
use crate::gradtape::{NodeId, Tape};
use crate::numerics::DenseMatrix;
use crate::stiefel::OrthogonalMatrix;

/// Whether gradients pass through the batch minimum and maximum used to
/// rescale projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RescaleGrad {
    #[default]
    Flow,
    Stop,
}

/// Monotone map pushing one batch of 1D values onto another through their
/// soft CDFs: `τ(x) = lo_t + (hi_t − lo_t)·F_t⁻¹(F_s((x − lo_s)/(hi_s − lo_s)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap1D {
    pub source_cdf: PiecewiseCdf,
    pub target_cdf: PiecewiseCdf,
    pub source_range: (f64, f64),
    pub target_range: (f64, f64),
    /// Constant source: the map is the identity.
    pub degenerate: bool,
}

impl TransportMap1D {
    pub fn fit(source: &[f64], target: &[f64], bins: usize, alpha: f64) -> Result<Self> {
        let s = rescale_unit(source)?;
        let t = rescale_unit(target)?;
        Ok(Self {
            source_cdf: cdf_from_pdf(&soft_histogram(&s.scaled, bins, alpha)?),
            target_cdf: cdf_from_pdf(&soft_histogram(&t.scaled, bins, alpha)?),
            source_range: (s.lo, s.hi),
            target_range: (t.lo, t.hi),
            degenerate: s.degenerate,
        })
    }

    pub fn apply_one(&self, x: f64) -> f64 {
        if self.degenerate {
            return x;
        }
        let (slo, shi) = self.source_range;
        let (tlo, thi) = self.target_range;
        let unit = ((x - slo) / (shi - slo)).clamp(0.0, 1.0);
        let q = self.target_cdf.inverse_one(self.source_cdf.eval_one(unit));
        (thi - tlo) * q + tlo
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.apply_one(*v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalBlockParams {
    pub ortho: OrthogonalMatrix,
    pub bins: usize,
    pub alpha: f64,
    pub rescale_grad: RescaleGrad,
}

impl PrimalBlockParams {
    pub fn new(ortho: OrthogonalMatrix, bins: usize, alpha: f64) -> Result<Self> {
        check_hist_params(bins, alpha)?;
        Ok(Self {
            ortho,
            bins,
            alpha,
            rescale_grad: RescaleGrad::Flow,
        })
    }

    pub fn dim(&self) -> usize {
        self.ortho.dim()
    }

    /// Appends the block to `tape`. `ortho` is the node holding the
    /// projection matrix (normally a leaf bound to `self.ortho`); `my` and
    /// `mz` are `r×b` source and target batches. Returns the `r×b` output.
    pub fn tape(&self, tape: &mut Tape, ortho: NodeId, my: NodeId, mz: NodeId) -> Result<NodeId> {
        check_hist_params(self.bins, self.alpha)?;
        let r = tape.value(ortho).rows();
        for m in [my, mz] {
            let (rows, b) = tape.value(m).shape();
            if rows != r || b < 2 {
                return Err(shape_err(alloc::format!(
                    "primal block of dimension {r} needs {r}×b batches with b ≥ 2, got {rows}×{b}"
                )));
            }
        }
        let ot = tape.transpose(ortho)?;
        let yp = tape.matmul(ot, my)?;
        let zp = tape.matmul(ot, mz)?;

        let (ysc, ymask, _, _) = self.rescale(tape, yp)?;
        let (zsc, _, zlo, zrange) = self.rescale(tape, zp)?;
        let fy = self.soft_cdf(tape, ysc)?;
        let fz = self.soft_cdf(tape, zsc)?;

        let u = tape.linear_interp(fy, ysc)?;
        let q = tape.inverse_interp(fz, u)?;
        let spread = tape.mul_col(q, zrange)?;
        let yhat = tape.add_col(spread, zlo)?;

        // Rows with a constant source pass through unchanged.
        let moved = tape.mul_col(yhat, ymask)?;
        let keep = tape.affine(ymask, -1.0, 1.0)?;
        let kept = tape.mul_col(yp, keep)?;
        let out = tape.add(moved, kept)?;
        tape.matmul(ortho, out)
    }

    /// Returns `(scaled, nondegenerate-mask, lo, hi − lo)`.
    fn rescale(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
        let mut lo = tape.row_min(x)?;
        let mut hi = tape.row_max(x)?;
        if self.rescale_grad == RescaleGrad::Stop {
            lo = tape.stop_gradient(lo)?;
            hi = tape.stop_gradient(hi)?;
        }
        let range = tape.sub(hi, lo)?;
        let gap = tape.affine(range, 1.0, -DEGENERATE_RANGE)?;
        let mask = tape.step(gap)?;
        let b = tape.value(x).cols();
        let lo_b = tape.repeat_cols(lo, b)?;
        let centered = tape.sub(x, lo_b)?;
        let range_b = tape.repeat_cols(range, b)?;
        let unit = tape.div(centered, range_b)?;
        let unit = tape.mul_col(unit, mask)?;
        let half = tape.affine(mask, -0.5, 0.5)?;
        let scaled = tape.add_col(unit, half)?;
        Ok((scaled, mask, lo, range))
    }

    /// Soft histogram followed by cumulative sums, `r×b -> r×(l+1)`.
    fn soft_cdf(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let (r, b) = tape.value(x).shape();
        let l = self.bins;
        let flat = tape.reshape(x, r * b, 1)?;
        let spread = tape.repeat_cols(flat, l)?;
        let centers = super::histogram::bin_centers(l);
        let c = tape.constant(DenseMatrix::from_fn(r * b, l, |_, k| centers[k]));
        let diff = tape.sub(spread, c)?;
        let sq = tape.square(diff)?;
        let logits = tape.scale(sq, -self.alpha * (l * l) as f64)?;
        let w = tape.softmax_rows(logits)?;
        let w = tape.reshape(w, r, b * l)?;
        let pool = tape.constant(DenseMatrix::from_fn(b * l, l, |i, k| {
            if i % l == k {
                1.0 / b as f64
            } else {
                0.0
            }
        }));
        let hist = tape.matmul(w, pool)?;
        let upper = tape.constant(DenseMatrix::from_fn(l, l + 1, |k, j| if k < j { 1.0 } else { 0.0 }));
        tape.matmul(hist, upper)
    }
}

/// Evaluates the block directly, row by row, through [`TransportMap1D`].
pub fn primal_block_forward(params: &PrimalBlockParams, my: &DenseMatrix, mz: &DenseMatrix) -> Result<DenseMatrix> {
    let o = params.ortho.as_matrix();
    let r = o.rows();
    for m in [my, mz] {
        if m.rows() != r || m.cols() < 2 {
            return Err(shape_err(alloc::format!(
                "primal block of dimension {r} needs {r}×b batches with b ≥ 2, got {}×{}",
                m.rows(),
                m.cols()
            )));
        }
    }
    let yp = o.t_matmul(my)?;
    let zp = o.t_matmul(mz)?;
    let mut out = DenseMatrix::zeros(r, my.cols());
    for i in 0..r {
        let map = TransportMap1D::fit(yp.row(i), zp.row(i), params.bins, params.alpha)?;
        out.row_mut(i).copy_from_slice(&map.apply(yp.row(i)));
    }
    o.matmul(&out)
}
