use alloc::format;
use alloc::vec::Vec;

use super::DenseMatrix;
use crate::error::{shape_err, Error, Result};

/// Pivots with `|r_kk| <= PIVOT_TOL * ‖m‖_F` are treated as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// Householder QR of a square matrix, sign-corrected so that `r` has a
/// strictly positive diagonal. The factorization is then unique, so an
/// orthogonal input with positive-diagonal `R` maps to itself.
pub fn qr_decompose(m: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if !m.is_square() {
        return Err(shape_err(format!(
            "qr_decompose needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let scale = m.frobenius_norm();
    let mut r = m.clone();
    let mut q = DenseMatrix::identity(n);
    let mut v = alloc::vec![0.0; n];

    for k in 0..n {
        let norm_x = libm::sqrt((k..n).map(|i| r[(i, k)] * r[(i, k)]).sum());
        if norm_x <= PIVOT_TOL * scale || scale == 0.0 {
            return Err(Error::RankDeficient { column: k });
        }
        if ((k + 1)..n).all(|i| r[(i, k)] == 0.0) {
            // Already triangular in this column; a reflection would only
            // add rounding.
            continue;
        }
        let alpha = if r[(k, k)] >= 0.0 { -norm_x } else { norm_x };
        for i in 0..n {
            v[i] = if i < k { 0.0 } else { r[(i, k)] };
        }
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // R <- H R, H = I - 2 v vᵀ / (vᵀv)
        for j in 0..n {
            let dot: f64 = (k..n).map(|i| v[i] * r[(i, j)]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                r[(i, j)] -= f * v[i];
            }
        }
        // Q <- Q H
        for i in 0..n {
            let dot: f64 = (k..n).map(|l| q[(i, l)] * v[l]).sum();
            let f = 2.0 * dot / vnorm2;
            for l in k..n {
                q[(i, l)] -= f * v[l];
            }
        }
        for i in (k + 1)..n {
            r[(i, k)] = 0.0;
        }
    }

    for k in 0..n {
        if r[(k, k)] < 0.0 {
            for j in 0..n {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..n {
                q[(i, k)] = -q[(i, k)];
            }
        }
        if r[(k, k)].abs() <= PIVOT_TOL * scale {
            return Err(Error::RankDeficient { column: k });
        }
    }
    Ok((q, r))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues are returned in descending order, eigenvectors as
/// the matching columns.
pub fn sym_eig_small(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if !m.is_square() {
        return Err(shape_err("sym_eig_small needs a square matrix"));
    }
    let tol = 1e-10 * m.max_abs().max(1.0);
    if !m.is_symmetric(tol) {
        return Err(shape_err("sym_eig_small needs a symmetric matrix"));
    }
    let n = m.rows();
    // Symmetrize exactly before rotating.
    let mut a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v = DenseMatrix::identity(n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= f64::MIN_POSITIVE || libm::sqrt(off) <= 1e-15 * a.frobenius_norm() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |row, col| v[(row, order[col])]);
    Ok((values, vectors))
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Eigenvalues down to `-1e-10` (relative to the largest magnitude) are
/// clamped to zero; anything more negative is rejected.
pub fn sqrtm_psd(m: &DenseMatrix) -> Result<DenseMatrix> {
    let (values, vectors) = sym_eig_small(m)?;
    let tol = 1e-10 * values.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let n = m.rows();
    let mut roots = Vec::with_capacity(n);
    for &lambda in &values {
        if lambda < -tol {
            return Err(Error::NotPsd { eigenvalue: lambda });
        }
        roots.push(libm::sqrt(lambda.max(0.0)));
    }
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| vectors[(i, k)] * roots[k] * vectors[(j, k)]).sum();
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    Ok(out)
}

/// Singular values of a square matrix by one-sided Jacobi rotations,
/// descending. Small singular values keep high relative accuracy, unlike
/// square roots of the eigenvalues of `mᵀm`.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(shape_err(format!("singular values need a square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let n = m.rows();
    let mut a = m.clone();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    alpha += a[(i, p)] * a[(i, p)];
                    beta += a[(i, q)] * a[(i, q)];
                    gamma += a[(i, p)] * a[(i, q)];
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * x - s * y;
                    a[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut values: Vec<f64> = (0..n).map(|j| libm::sqrt((0..n).map(|i| a[(i, j)] * a[(i, j)]).sum())).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(values)
}
