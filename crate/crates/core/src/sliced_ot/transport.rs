use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{sort_with_ranks, DenseMatrix, RngStream};
use crate::stiefel::orth_init;

/// Exact `p`-Wasserstein distance between two equal-size empirical measures
/// on the line, via matched order statistics.
pub fn wasserstein_1d_exact(x: &[f64], y: &[f64], p: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(shape_err(format!("sample sizes differ: {} vs {}", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(shape_err("empty samples"));
    }
    if p.is_nan() || p < 1.0 {
        return Err(Error::Precondition(format!("order must be ≥ 1, got {p}")));
    }
    let (xs, _) = sort_with_ranks(x)?;
    let (ys, _) = sort_with_ranks(y)?;
    let n = x.len() as f64;
    if p == 1.0 {
        return Ok(xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).sum::<f64>() / n);
    }
    let total: f64 = xs.iter().zip(&ys).map(|(a, b)| libm::pow((a - b).abs(), p)).sum();
    Ok(libm::pow(total / n, 1.0 / p))
}

/// Sorting-based optimal transport: the element of rank `k` in `source` is
/// sent to the `k`-th smallest target value.
pub fn exact_transport_1d(source: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if source.len() != target.len() {
        return Err(shape_err(format!(
            "sample sizes differ: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    let (_, perm) = sort_with_ranks(source)?;
    let (sorted_target, _) = sort_with_ranks(target)?;
    let mut out = alloc::vec![0.0; source.len()];
    for (k, &i) in perm.iter().enumerate() {
        out[i] = sorted_target[k];
    }
    Ok(out)
}

/// Iterative distribution transfer: `m` rounds of a random rotation
/// followed by exact 1D transport of every projected row.
pub fn idt_transfer(source: &DenseMatrix, target: &DenseMatrix, m: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
    if m == 0 {
        return Err(Error::Precondition("need at least one block".into()));
    }
    source.require_same_shape(target)?;
    let r = source.rows();
    let mut x = source.clone();
    for _ in 0..m {
        let o = orth_init(r, rng)?;
        let o = o.as_matrix();
        let xp = o.t_matmul(&x)?;
        let tp = o.t_matmul(target)?;
        let mut moved = DenseMatrix::zeros(r, x.cols());
        for i in 0..r {
            moved.row_mut(i).copy_from_slice(&exact_transport_1d(xp.row(i), tp.row(i))?);
        }
        x = o.matmul(&moved)?;
    }
    Ok(x)
}

/// Unit directions stored as the rows of an `L×n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet(DenseMatrix);

impl ProjectionSet {
    /// `count` directions drawn uniformly from the unit sphere in `R^dim`.
    pub fn sample(dim: usize, count: usize, rng: &mut RngStream) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(Error::Precondition("need a positive dimension and projection count".into()));
        }
        let mut m = DenseMatrix::zeros(count, dim);
        for k in 0..count {
            loop {
                let g = rng.gaussian(dim);
                let norm = libm::sqrt(g.iter().map(|v| v * v).sum());
                if norm > 1e-12 {
                    for (dst, v) in m.row_mut(k).iter_mut().zip(&g) {
                        *dst = v / norm;
                    }
                    break;
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(directions: DenseMatrix) -> Result<Self> {
        for k in 0..directions.rows() {
            let n: f64 = directions.row(k).iter().map(|v| v * v).sum();
            if (libm::sqrt(n) - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!("direction {k} is not unit length")));
            }
        }
        Ok(Self(directions))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn directions(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Monte-Carlo sliced Wasserstein distance over the given directions.
pub fn mc_swd_with(x: &DenseMatrix, y: &DenseMatrix, dirs: &ProjectionSet, p: f64) -> Result<f64> {
    x.require_same_shape(y)?;
    if x.rows() != dirs.dim() {
        return Err(shape_err(format!(
            "points have dimension {} but directions {}",
            x.rows(),
            dirs.dim()
        )));
    }
    let px = dirs.directions().matmul(x)?;
    let py = dirs.directions().matmul(y)?;
    let mut total = 0.0;
    for k in 0..dirs.len() {
        let w = wasserstein_1d_exact(px.row(k), py.row(k), p)?;
        total += if p == 1.0 { w } else { libm::pow(w, p) };
    }
    let mean = total / dirs.len() as f64;
    Ok(if p == 1.0 { mean } else { libm::pow(mean, 1.0 / p) })
}

/// Monte-Carlo sliced Wasserstein distance with `count` fresh directions.
pub fn mc_swd(x: &DenseMatrix, y: &DenseMatrix, count: usize, p: f64, rng: &mut RngStream) -> Result<f64> {
    x.require_same_shape(y)?;
    let dirs = ProjectionSet::sample(x.rows(), count, rng)?;
    mc_swd_with(x, y, &dirs, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w1_examples() {
        assert_eq!(wasserstein_1d_exact(&[3.0, 1.0], &[1.0, 3.0], 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_1d_exact(&[0.0, 1.0], &[1.0, 2.0], 1.0).unwrap(), 1.0);
        let x = [0.3, -1.2, 4.0, 2.5];
        let y: Vec<f64> = x.iter().map(|v| v - 0.75).collect();
        assert!((wasserstein_1d_exact(&x, &y, 1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(wasserstein_1d_exact(&x, &[1.0], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn w1_symmetry_and_higher_order() {
        let mut rng = RngStream::new(3);
        for _ in 0..50 {
            let x = rng.gaussian(17);
            let y = rng.uniform(17);
            for p in [1.0, 2.0, 3.5] {
                let a = wasserstein_1d_exact(&x, &y, p).unwrap();
                let b = wasserstein_1d_exact(&y, &x, p).unwrap();
                assert_eq!(a, b);
            }
            // Jensen: W1 ≤ W2.
            assert!(wasserstein_1d_exact(&x, &y, 1.0).unwrap() <= wasserstein_1d_exact(&x, &y, 2.0).unwrap() + 1e-12);
        }
    }

    #[test]
    fn exact_transport_is_rank_preserving() {
        let out = exact_transport_1d(&[3.0, 1.0, 2.0], &[10.0, 30.0, 20.0]).unwrap();
        assert_eq!(out, alloc::vec![30.0, 10.0, 20.0]);
    }

    #[test]
    fn idt_identity_on_matched_batches() {
        let mut rng = RngStream::new(1);
        let x = rng.gaussian_matrix(3, 50);
        let out = idt_transfer(&x, &x, 1, &mut rng).unwrap();
        assert!(out.sub(&x).unwrap().max_abs() <= 1e-9);
        assert!(idt_transfer(&x, &x, 0, &mut rng).is_err());
    }

    #[test]
    fn idt_closes_gaussian_gap() {
        let mut rng = RngStream::new(2);
        let src = rng.gaussian_matrix(2, 2048).map(|v| v + 3.0);
        let tgt = rng.gaussian_matrix(2, 2048);
        let mut eval = rng.derive(9);
        let dirs = ProjectionSet::sample(2, 256, &mut eval).unwrap();
        let before = mc_swd_with(&src, &tgt, &dirs, 1.0).unwrap();
        let out = idt_transfer(&src, &tgt, 100, &mut rng).unwrap();
        let after = mc_swd_with(&out, &tgt, &dirs, 1.0).unwrap();
        assert!(after <= 0.1 * before, "{before} -> {after}");
    }

    #[test]
    fn mc_swd_zero_and_symmetric() {
        let mut rng = RngStream::new(5);
        let x = rng.gaussian_matrix(3, 40);
        let y = rng.uniform_matrix(3, 40);
        assert_eq!(mc_swd(&x, &x, 32, 1.0, &mut rng).unwrap(), 0.0);
        let dirs = ProjectionSet::sample(3, 64, &mut rng).unwrap();
        let a = mc_swd_with(&x, &y, &dirs, 2.0).unwrap();
        let b = mc_swd_with(&y, &x, &dirs, 2.0).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }

    #[test]
    fn point_masses_match_mean_abs_cosine() {
        let mut rng = RngStream::new(6);
        let a = 1.5;
        let x = DenseMatrix::column_vector(&[0.0, 0.0]).unwrap();
        let y = DenseMatrix::column_vector(&[a, 0.0]).unwrap();
        let count = 20_000;
        let dirs = ProjectionSet::sample(2, count, &mut rng).unwrap();
        let est = mc_swd_with(&x, &y, &dirs, 1.0).unwrap();
        let expect = 2.0 * a / core::f64::consts::PI;
        // Var |a cos θ| = a²/2 − (2a/π)².
        let se = libm::sqrt((a * a / 2.0 - expect * expect) / count as f64);
        assert!((est - expect).abs() <= 3.0 * se, "{est} vs {expect} (se {se})");
    }

    #[test]
    fn triangle_inequality_with_shared_directions() {
        let mut rng = RngStream::new(7);
        for _ in 0..200 {
            let dirs = ProjectionSet::sample(3, 16, &mut rng).unwrap();
            let x = rng.gaussian_matrix(3, 12);
            let y = rng.gaussian_matrix(3, 12).map(|v| 2.0 * v);
            let z = rng.uniform_matrix(3, 12);
            let xy = mc_swd_with(&x, &y, &dirs, 1.0).unwrap();
            let yz = mc_swd_with(&y, &z, &dirs, 1.0).unwrap();
            let xz = mc_swd_with(&x, &z, &dirs, 1.0).unwrap();
            assert!(xz <= xy + yz + 1e-9);
        }
    }

    #[test]
    fn projection_sets_are_unit() {
        let mut rng = RngStream::new(8);
        let d = ProjectionSet::sample(5, 10, &mut rng).unwrap();
        assert!(ProjectionSet::from_rows(d.directions().clone()).is_ok());
        assert!(ProjectionSet::from_rows(DenseMatrix::filled(2, 2, 1.0)).is_err());
    }
}
