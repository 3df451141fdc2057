//! Toy 2D datasets, moment-matching scores, exact small-instance
//! Wasserstein distances and critic value surfaces.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{singular_values, sqrtm_psd, DenseMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    SwissRoll,
    GaussiansRing8,
    GaussiansGrid25,
}

impl ToyKind {
    pub const ALL: [ToyKind; 3] = [ToyKind::SwissRoll, ToyKind::GaussiansRing8, ToyKind::GaussiansGrid25];

    pub fn name(self) -> &'static str {
        match self {
            ToyKind::SwissRoll => "swiss-roll",
            ToyKind::GaussiansRing8 => "gaussians-ring-8",
            ToyKind::GaussiansGrid25 => "gaussians-grid-25",
        }
    }
}

impl FromStr for ToyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swiss-roll" | "swissroll" => Ok(ToyKind::SwissRoll),
            "gaussians-ring-8" | "8gaussians" => Ok(ToyKind::GaussiansRing8),
            "gaussians-grid-25" | "25gaussians" => Ok(ToyKind::GaussiansGrid25),
            _ => Err(Error::Precondition(format!("unknown dataset `{s}`"))),
        }
    }
}

/// Spiral parameter range `t ∈ [T_MIN, T_MAX]` of the Swiss roll.
const T_MIN: f64 = 1.5 * PI;
const T_MAX: f64 = 4.5 * PI;

/// A toy dataset. `noise_std` is in output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDatasetSpec {
    pub kind: ToyKind,
    pub noise_std: f64,
    pub scale: f64,
}

impl ToyDatasetSpec {
    /// Frozen defaults. The Swiss roll is `(t cos t, t sin t)` with
    /// `t = 1.5π(1 + 2U)`, noise 0.25 and scale 1/7.5. The ring has radius
    /// `2·scale`, the grid spacing `2·scale`; both use noise `0.02·scale`.
    pub fn default_for(kind: ToyKind) -> Self {
        let (scale, noise_std) = match kind {
            ToyKind::SwissRoll => (1.0 / 7.5, 0.25 / 7.5),
            ToyKind::GaussiansRing8 => {
                let scale = core::f64::consts::FRAC_1_SQRT_2;
                (scale, 0.02 * scale)
            }
            ToyKind::GaussiansGrid25 => {
                let scale = 0.5 * core::f64::consts::FRAC_1_SQRT_2;
                (scale, 0.02 * scale)
            }
        };
        Self { kind, noise_std, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::Precondition(format!("noise std must be ≥ 0, got {}", self.noise_std)));
        }
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::Precondition(format!("scale must be > 0, got {}", self.scale)));
        }
        Ok(())
    }

    /// Mixture component centers; empty for the Swiss roll.
    pub fn mode_centers(&self) -> Vec<(f64, f64)> {
        match self.kind {
            ToyKind::SwissRoll => Vec::new(),
            ToyKind::GaussiansRing8 => (0..8)
                .map(|k| {
                    let a = k as f64 * PI / 4.0;
                    (2.0 * self.scale * libm::cos(a), 2.0 * self.scale * libm::sin(a))
                })
                .collect(),
            ToyKind::GaussiansGrid25 => (0..25)
                .map(|k| {
                    let (i, j) = ((k / 5) as f64 - 2.0, (k % 5) as f64 - 2.0);
                    (2.0 * self.scale * i, 2.0 * self.scale * j)
                })
                .collect(),
        }
    }

    /// Half-width `h` of a box `[−h, h]²` holding every sample: the extent
    /// of the noiseless support plus six noise standard deviations.
    pub fn bounding_box(&self) -> f64 {
        let support = match self.kind {
            ToyKind::SwissRoll => T_MAX * self.scale,
            ToyKind::GaussiansRing8 => 2.0 * self.scale,
            ToyKind::GaussiansGrid25 => 4.0 * self.scale,
        };
        support + 6.0 * self.noise_std
    }
}

/// `b` samples as the columns of a `2×b` matrix.
pub fn sample_toy(spec: &ToyDatasetSpec, b: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
    spec.validate()?;
    if b == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    let centers = spec.mode_centers();
    let mut out = DenseMatrix::zeros(2, b);
    for j in 0..b {
        let (cx, cy) = match spec.kind {
            ToyKind::SwissRoll => {
                let t = T_MIN + (T_MAX - T_MIN) * rng.uniform01();
                (spec.scale * t * libm::cos(t), spec.scale * t * libm::sin(t))
            }
            _ => centers[rng.below(centers.len() as u64) as usize],
        };
        let noise = rng.gaussian(2);
        out[(0, j)] = cx + spec.noise_std * noise[0];
        out[(1, j)] = cy + spec.noise_std * noise[1];
    }
    Ok(out)
}

/// Fraction of the columns of `x` within `radius` of each mode center.
pub fn mode_coverage(spec: &ToyDatasetSpec, x: &DenseMatrix, radius: f64) -> Result<Vec<f64>> {
    if x.rows() != 2 {
        return Err(shape_err("mode coverage needs 2D samples"));
    }
    let centers = spec.mode_centers();
    let mut hits = vec![0usize; centers.len()];
    for j in 0..x.cols() {
        for (k, (cx, cy)) in centers.iter().enumerate() {
            if libm::hypot(x[(0, j)] - cx, x[(1, j)] - cy) <= radius {
                hits[k] += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / x.cols() as f64).collect())
}

/// Sample mean and unbiased covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFit {
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    pub count: usize,
}

/// Fits the columns of the `n×b` matrix `x`.
pub fn gaussian_fit(x: &DenseMatrix) -> Result<GaussianFit> {
    let (n, b) = x.shape();
    if b < 2 {
        return Err(Error::InsufficientSamples { got: b, need: 2 });
    }
    let mean: Vec<f64> = (0..n).map(|i| x.row(i).iter().sum::<f64>() / b as f64).collect();
    let centered = DenseMatrix::from_fn(n, b, |i, j| x[(i, j)] - mean[i]);
    let mut covariance = centered.matmul_t(&centered)?.scale(1.0 / (b - 1) as f64);
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = s;
            covariance[(j, i)] = s;
        }
    }
    Ok(GaussianFit { mean, covariance, count: b })
}

/// Fréchet distance between two Gaussians:
/// `‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`.
///
/// The trace of the inner root is the sum of singular values of
/// `Σ₂^{1/2} Σ₁^{1/2}`, which stays accurate for near-singular covariances
/// and is symmetric in the two fits.
pub fn frechet_gaussian(a: &GaussianFit, b: &GaussianFit) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(shape_err("fits have different dimensions"));
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let s1 = sqrtm_psd(&a.covariance)?;
    let s2 = sqrtm_psd(&b.covariance)?;
    let cross: f64 = singular_values(&s2.matmul(&s1)?)?.iter().sum();
    let value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

/// Largest batch accepted by [`hungarian_w1`].
pub const HUNGARIAN_MAX: usize = 64;

/// Minimum-cost perfect assignment for a square cost matrix, by shortest
/// augmenting paths with potentials. `result[i]` is the column given to
/// row `i`.
fn assignment(cost: &DenseMatrix) -> Vec<usize> {
    let n = cost.rows();
    let inf = f64::INFINITY;
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        result[owner[j] - 1] = j - 1;
    }
    result
}

/// Exact 1-Wasserstein distance with Euclidean ground cost between the
/// equal-weight empirical measures on the columns of `x` and `y`.
pub fn hungarian_w1(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    x.require_same_shape(y)?;
    let b = x.cols();
    if b > HUNGARIAN_MAX {
        return Err(Error::TooLarge {
            size: b,
            max: HUNGARIAN_MAX,
        });
    }
    let cost = DenseMatrix::from_fn(b, b, |i, j| {
        libm::sqrt((0..x.rows()).map(|k| (x[(k, i)] - y[(k, j)]) * (x[(k, i)] - y[(k, j)])).sum())
    });
    let sigma = assignment(&cost);
    Ok(sigma.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>() / b as f64)
}

/// Evaluates a critic on the uniform `g×g` grid over `[lo, hi]²`. Entry
/// `(i, j)` is the value at `x = lo + j·δ`, `y = lo + i·δ` with
/// `δ = (hi − lo)/(g − 1)`. The critic receives one `2×g` row of the grid
/// at a time and returns one value per column.
pub fn value_surface(
    critic: impl Fn(&DenseMatrix) -> Result<Vec<f64>>,
    range: (f64, f64),
    g: usize,
) -> Result<DenseMatrix> {
    if g < 2 {
        return Err(shape_err(format!("grid resolution must be ≥ 2, got {g}")));
    }
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || hi <= lo {
        return Err(Error::Precondition(format!("invalid grid range [{lo}, {hi}]")));
    }
    let coord = |k: usize| surface_coord(range, g, k);
    let mut out = DenseMatrix::zeros(g, g);
    for i in 0..g {
        let points = DenseMatrix::from_fn(2, g, |d, j| if d == 0 { coord(j) } else { coord(i) });
        let values = critic(&points)?;
        if values.len() != g {
            return Err(shape_err(format!("critic returned {} values for {g} points", values.len())));
        }
        out.row_mut(i).copy_from_slice(&values);
    }
    Ok(out)
}

/// Grid coordinate `k` of [`value_surface`].
pub fn surface_coord(range: (f64, f64), g: usize, k: usize) -> f64 {
    if k == g - 1 {
        range.1
    } else {
        range.0 + (range.1 - range.0) * k as f64 / (g - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sliced_ot::{mc_swd_with, wasserstein_1d_exact, ProjectionSet};

    fn fit_of(rows: &[&[f64]]) -> GaussianFit {
        gaussian_fit(&DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    fn manual_fit(mean: [f64; 2], cov: [[f64; 2]; 2]) -> GaussianFit {
        GaussianFit {
            mean: mean.to_vec(),
            covariance: DenseMatrix::from_rows(&[&cov[0], &cov[1]]).unwrap(),
            count: 100,
        }
    }

    #[test]
    fn zero_noise_ring_sits_on_centers() {
        let mut spec = ToyDatasetSpec::default_for(ToyKind::GaussiansRing8);
        spec.noise_std = 0.0;
        let centers = spec.mode_centers();
        let x = sample_toy(&spec, 200, &mut RngStream::new(1)).unwrap();
        for j in 0..200 {
            assert!(centers.iter().any(|c| c.0 == x[(0, j)] && c.1 == x[(1, j)]));
        }
        assert!((libm::hypot(centers[1].0, centers[1].1) - 2.0 * spec.scale).abs() < 1e-15);
    }

    #[test]
    fn grid_modes_are_balanced() {
        let spec = ToyDatasetSpec::default_for(ToyKind::GaussiansGrid25);
        let x = sample_toy(&spec, 25_000, &mut RngStream::new(2)).unwrap();
        let cover = mode_coverage(&spec, &x, 6.0 * spec.noise_std).unwrap();
        assert_eq!(cover.len(), 25);
        for c in cover {
            assert!((0.03..=0.05).contains(&c), "{c}");
        }
    }

    #[test]
    fn samples_stay_in_the_box() {
        for kind in ToyKind::ALL {
            let spec = ToyDatasetSpec::default_for(kind);
            let h = spec.bounding_box();
            assert!(h <= 2.1, "{kind:?}: {h}");
            let x = sample_toy(&spec, 10_000, &mut RngStream::new(3)).unwrap();
            assert!(x.max_abs() <= h, "{kind:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = ToyDatasetSpec::default_for(ToyKind::SwissRoll);
        let a = sample_toy(&spec, 64, &mut RngStream::new(4)).unwrap();
        let b = sample_toy(&spec, 64, &mut RngStream::new(4)).unwrap();
        assert_eq!(a, b);
        assert!(sample_toy(&spec, 0, &mut RngStream::new(4)).is_err());
        let bad = ToyDatasetSpec { scale: 0.0, ..spec };
        assert!(sample_toy(&bad, 4, &mut RngStream::new(4)).is_err());
    }

    #[test]
    fn dataset_names_round_trip() {
        for kind in ToyKind::ALL {
            assert_eq!(kind.name().parse::<ToyKind>().unwrap(), kind);
        }
        assert!("mnist".parse::<ToyKind>().is_err());
    }

    #[test]
    fn fit_examples() {
        let f = fit_of(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert_eq!(f.mean, vec![1.0, 0.0]);
        assert_eq!(f.covariance, DenseMatrix::diag(&[2.0, 0.0]));
        let f = fit_of(&[&[1.5, 1.5, 1.5], &[-2.0, -2.0, -2.0]]);
        assert_eq!(f.covariance.max_abs(), 0.0);
        assert!(matches!(
            gaussian_fit(&DenseMatrix::zeros(2, 1)),
            Err(Error::InsufficientSamples { got: 1, need: 2 })
        ));
        let f = gaussian_fit(&RngStream::new(5).gaussian_matrix(2, 20_000)).unwrap();
        assert!(f.mean.iter().all(|m| m.abs() <= 0.05));
        assert!(f.covariance.sub(&DenseMatrix::identity(2)).unwrap().max_abs() <= 0.05);
    }

    #[test]
    fn frechet_examples() {
        let a = manual_fit([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(frechet_gaussian(&a, &a).unwrap(), 0.0);
        let b = manual_fit([3.0, 4.0], [[1.0, 0.0], [0.0, 1.0]]);
        assert!((frechet_gaussian(&a, &b).unwrap() - 25.0).abs() < 1e-12);
        let c = manual_fit([0.0, 0.0], [[4.0, 0.0], [0.0, 4.0]]);
        assert!((frechet_gaussian(&a, &c).unwrap() - 2.0).abs() < 1e-12);
        let bad = manual_fit([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]]);
        assert!(matches!(frechet_gaussian(&bad, &a), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn frechet_matches_commuting_closed_form() {
        // For commuting covariances the cross term is Σ √(λ_i μ_i).
        let mut rng = RngStream::new(6);
        for _ in 0..50 {
            let q = crate::stiefel::orth_init(2, &mut rng).unwrap().into_matrix();
            let l1 = rng.uniform(2);
            let l2 = rng.uniform(2);
            let cov = |l: &[f64]| q.matmul(&DenseMatrix::diag(l)).unwrap().matmul_t(&q).unwrap();
            let sym = |m: DenseMatrix| DenseMatrix::from_fn(2, 2, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
            let a = GaussianFit {
                mean: vec![0.0, 0.0],
                covariance: sym(cov(&l1)),
                count: 2,
            };
            let b = GaussianFit {
                mean: vec![0.0, 0.0],
                covariance: sym(cov(&l2)),
                count: 2,
            };
            let expect: f64 = (0..2).map(|i| (libm::sqrt(l1[i]) - libm::sqrt(l2[i])).powi(2)).sum();
            assert!((frechet_gaussian(&a, &b).unwrap() - expect).abs() < 1e-9);
        }
    }

    fn brute_force_w1(x: &DenseMatrix, y: &DenseMatrix) -> f64 {
        let b = x.cols();
        let cost = |i: usize, j: usize| {
            libm::sqrt((0..x.rows()).map(|k| (x[(k, i)] - y[(k, j)]) * (x[(k, i)] - y[(k, j)])).sum())
        };
        let mut best = f64::INFINITY;
        let mut perm: Vec<usize> = (0..b).collect();
        // Heap's algorithm.
        let mut c = vec![0usize; b];
        let eval = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>() / b as f64;
        best = best.min(eval(&perm));
        let mut i = 0;
        while i < b {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(eval(&perm));
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best
    }

    #[test]
    fn hungarian_examples() {
        let mut rng = RngStream::new(7);
        let x = rng.gaussian_matrix(2, 10);
        assert_eq!(hungarian_w1(&x, &x).unwrap(), 0.0);
        for _ in 0..50 {
            let x = rng.gaussian_matrix(2, 3);
            let y = rng.gaussian_matrix(2, 3);
            assert_eq!(hungarian_w1(&x, &y).unwrap(), brute_force_w1(&x, &y));
        }
        for _ in 0..20 {
            let x = rng.gaussian_matrix(2, 6);
            let y = rng.uniform_matrix(2, 6);
            assert!((hungarian_w1(&x, &y).unwrap() - brute_force_w1(&x, &y)).abs() < 1e-12);
        }
        for _ in 0..50 {
            let x = rng.gaussian_matrix(1, 40);
            let y = rng.gaussian_matrix(1, 40);
            let exact = wasserstein_1d_exact(x.row(0), y.row(0), 1.0).unwrap();
            assert!((hungarian_w1(&x, &y).unwrap() - exact).abs() < 1e-12);
        }
        let big = DenseMatrix::zeros(2, 65);
        assert!(matches!(hungarian_w1(&big, &big), Err(Error::TooLarge { size: 65, max: 64 })));
    }

    #[test]
    fn sliced_distance_never_exceeds_w1() {
        let mut rng = RngStream::new(8);
        for _ in 0..50 {
            let b = 2 + rng.below(31) as usize;
            let x = rng.gaussian_matrix(2, b);
            let y = rng.gaussian_matrix(2, b).map(|v| 1.5 * v + 0.3);
            let dirs = ProjectionSet::sample(2, 64, &mut rng).unwrap();
            assert!(mc_swd_with(&x, &y, &dirs, 1.0).unwrap() <= hungarian_w1(&x, &y).unwrap() + 1e-9);
        }
    }

    #[test]
    fn surface_examples() {
        let constant = value_surface(|p| Ok(vec![2.5; p.cols()]), (-1.0, 1.0), 5).unwrap();
        assert!(constant.as_slice().iter().all(|v| *v == 2.5));

        let linear = value_surface(
            |p| Ok((0..p.cols()).map(|j| 0.5 * p[(0, j)] - 2.0 * p[(1, j)]).collect()),
            (-2.0, 2.0),
            9,
        )
        .unwrap();
        for i in 0..9 {
            for j in 1..9 {
                assert!((linear[(i, j)] - linear[(i, j - 1)] - 0.25).abs() < 1e-12);
            }
        }
        for j in 0..9 {
            for i in 1..9 {
                assert!((linear[(i, j)] - linear[(i - 1, j)] + 1.0).abs() < 1e-12);
            }
        }

        let corners = value_surface(
            |p| Ok((0..p.cols()).map(|j| 10.0 * p[(0, j)] + p[(1, j)]).collect()),
            (-1.0, 1.0),
            2,
        )
        .unwrap();
        assert_eq!(corners.as_slice(), &[-11.0, 9.0, -9.0, 11.0]);
        assert!(value_surface(|p| Ok(vec![0.0; p.cols()]), (0.0, 1.0), 1).is_err());
        assert_eq!(surface_coord((-1.0, 1.0), 2, 1), 1.0);
    }
}
