use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Inputs may stray outside `[0, 1]` by this much before being rejected.
pub const DOMAIN_SLACK: f64 = 1e-9;

/// Ranges narrower than this are treated as a single point.
pub const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Rescaled {
    pub scaled: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub degenerate: bool,
}

/// Affinely maps `v` onto `[0, 1]`. A (near) constant vector maps to `0.5`.
pub fn rescale_unit(v: &[f64]) -> Result<Rescaled> {
    if v.is_empty() {
        return Err(Error::Precondition("cannot rescale an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range < DEGENERATE_RANGE {
        return Ok(Rescaled {
            scaled: alloc::vec![0.5; v.len()],
            lo,
            hi,
            degenerate: true,
        });
    }
    Ok(Rescaled {
        scaled: v.iter().map(|x| (x - lo) / range).collect(),
        lo,
        hi,
        degenerate: false,
    })
}

/// Bin centers `(j − 0.5) / l`, `j = 1..=l`.
pub fn bin_centers(bins: usize) -> Vec<f64> {
    (0..bins).map(|j| (j as f64 + 0.5) / bins as f64).collect()
}

fn check_unit(v: f64) -> Result<f64> {
    if !(-DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&v) {
        return Err(Error::Domain { value: v });
    }
    Ok(v.clamp(0.0, 1.0))
}

pub(crate) fn check_hist_params(bins: usize, alpha: f64) -> Result<()> {
    if bins < 2 {
        return Err(Error::Precondition(format!("need at least 2 bins, got {bins}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!("softness must be positive, got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftHistogram {
    pub bins: usize,
    pub alpha: f64,
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Per-element bin memberships: a softmax over bins of
/// `−α·(l·(y − c_j))²`, i.e. a Gaussian kernel measured in bin widths.
pub fn soft_assignments(y: f64, centers: &[f64], alpha: f64) -> Vec<f64> {
    let l = centers.len() as f64;
    let logits: Vec<f64> = centers
        .iter()
        .map(|c| {
            let d = l * (y - c);
            -alpha * d * d
        })
        .collect();
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|z| libm::exp(z - m)).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

pub fn soft_histogram(v: &[f64], bins: usize, alpha: f64) -> Result<SoftHistogram> {
    check_hist_params(bins, alpha)?;
    if v.is_empty() {
        return Err(Error::Precondition("histogram of an empty vector".into()));
    }
    let centers = bin_centers(bins);
    let mut weights = alloc::vec![0.0; bins];
    for &y in v {
        let y = check_unit(y)?;
        for (acc, w) in weights.iter_mut().zip(soft_assignments(y, &centers, alpha)) {
            *acc += w;
        }
    }
    let n = v.len() as f64;
    for w in &mut weights {
        *w /= n;
    }
    Ok(SoftHistogram {
        bins,
        alpha,
        centers,
        weights,
    })
}

/// Piecewise-linear CDF on `[0, 1]` with knots at `k / l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCdf {
    values: Vec<f64>,
}

impl PiecewiseCdf {
    /// `values` are the CDF at the `l + 1` knots: nondecreasing, first `0`,
    /// last `1`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Precondition("a CDF needs at least two segments".into()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::Precondition("CDF must run from exactly 0 to exactly 1".into()));
        }
        if values.iter().any(|v| v.is_nan()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Precondition("CDF values must be nondecreasing".into()));
        }
        Ok(Self { values })
    }

    pub fn bins(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn knots(&self) -> Vec<f64> {
        let l = self.bins() as f64;
        (0..self.values.len()).map(|k| k as f64 / l).collect()
    }

    /// Linear interpolation at `x ∈ [0, 1]`; knots belong to the segment on
    /// their left.
    pub fn eval_one(&self, x: f64) -> f64 {
        let l = self.bins();
        let idx = ((libm::ceil(x * l as f64) - 1.0).clamp(0.0, (l - 1) as f64)) as usize;
        let frac = x * l as f64 - idx as f64;
        let (a, b) = (self.values[idx], self.values[idx + 1]);
        a + frac * (b - a)
    }

    /// Generalized inverse; on flat stretches the left end is returned.
    pub fn inverse_one(&self, p: f64) -> f64 {
        let l = self.bins();
        let k = self.values[1..].partition_point(|t| *t < p).min(l - 1);
        let (a, b) = (self.values[k], self.values[k + 1]);
        let rise = b - a;
        let frac = if rise == 0.0 { 0.0 } else { (p - a) / rise };
        (k as f64 + frac) / l as f64
    }
}

pub fn cdf_from_pdf(h: &SoftHistogram) -> PiecewiseCdf {
    let mut values = Vec::with_capacity(h.bins + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for w in &h.weights {
        acc += w;
        values.push(acc.min(1.0));
    }
    *values.last_mut().unwrap() = 1.0;
    PiecewiseCdf { values }
}

pub fn cdf_eval(f: &PiecewiseCdf, x: &[f64]) -> Result<Vec<f64>> {
    x.iter().map(|v| check_unit(*v).map(|v| f.eval_one(v))).collect()
}

pub fn cdf_inverse(f: &PiecewiseCdf, p: &[f64]) -> Result<Vec<f64>> {
    p.iter().map(|v| check_unit(*v).map(|v| f.inverse_one(v))).collect()
}
