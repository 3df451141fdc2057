use alloc::format;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Which deviation of the empirical CDF from the truth is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Deviation {
    /// `sup (F_b − F)`, the side whose tail is `exp(−2bε²)`.
    #[default]
    OneSided,
    /// `sup |F_b − F|`, whose tail is bounded by `2·exp(−2bε²)`.
    TwoSided,
}

/// Smallest `ε` accepted by [`dkw_check`] for `b` samples.
pub fn dkw_floor(b: usize) -> f64 {
    libm::sqrt(core::f64::consts::LN_2 / (2.0 * b as f64))
}

/// `exp(−2bε²)`.
pub fn dkw_bound(b: usize, eps: f64) -> f64 {
    libm::exp(-2.0 * b as f64 * eps * eps)
}

/// Deviation of the empirical CDF of `sorted` (uniform draws) from the
/// uniform CDF.
fn deviation(sorted: &[f64], side: Deviation) -> f64 {
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, u) in sorted.iter().enumerate() {
        let above = (i + 1) as f64 / n - u;
        worst = worst.max(above);
        if side == Deviation::TwoSided {
            worst = worst.max(u - i as f64 / n);
        }
    }
    worst
}

/// Fraction of `trials` in which `b` uniform samples have an empirical CDF
/// deviating from the truth by more than `eps`. No validity checks.
pub fn dkw_violation_frequency(b: usize, eps: f64, trials: usize, side: Deviation, rng: &mut RngStream) -> f64 {
    let mut hits = 0usize;
    let mut buf = alloc::vec::Vec::with_capacity(b);
    for _ in 0..trials {
        buf.clear();
        buf.extend((0..b).map(|_| rng.uniform01()));
        buf.sort_by(f64::total_cmp);
        if deviation(&buf, side) > eps {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

/// Empirical tail frequency of the one-sided CDF deviation, to be compared
/// with [`dkw_bound`].
pub fn dkw_check(b: usize, eps: f64, trials: usize, rng: &mut RngStream) -> Result<f64> {
    if b == 0 {
        return Err(Error::Precondition("need at least one sample".into()));
    }
    if trials < 1000 {
        return Err(Error::Precondition(format!("need at least 1000 trials, got {trials}")));
    }
    let floor = dkw_floor(b);
    if eps < floor {
        return Err(Error::Precondition(format!(
            "eps {eps} is below the validity floor {floor:.4} for b = {b}"
        )));
    }
    Ok(dkw_violation_frequency(b, eps, trials, Deviation::OneSided, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slack(p: f64, trials: usize) -> f64 {
        3.0 * libm::sqrt(p * (1.0 - p) / trials as f64)
    }

    #[test]
    fn deviation_by_hand() {
        // Samples 0.1, 0.2: F_b − F peaks at 1 − 0.2 = 0.8 just after 0.2.
        assert!((deviation(&[0.1, 0.2], Deviation::OneSided) - 0.8).abs() < 1e-15);
        // Samples 0.8, 0.9: F − F_b peaks at 0.8 just before 0.8.
        assert!((deviation(&[0.8, 0.9], Deviation::TwoSided) - 0.8).abs() < 1e-15);
        assert!((deviation(&[0.8, 0.9], Deviation::OneSided) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn frequencies_respect_the_bound() {
        let mut rng = RngStream::new(1);
        for (b, eps) in [(1000, 0.05), (100, 0.2)] {
            let trials = 10_000;
            let f = dkw_check(b, eps, trials, &mut rng).unwrap();
            let bound = dkw_bound(b, eps);
            assert!(f <= bound + slack(bound, trials), "b={b} eps={eps}: {f} vs {bound}");
        }
    }

    #[test]
    fn eps_one_never_violated() {
        let mut rng = RngStream::new(2);
        assert_eq!(dkw_check(10, 1.0, 1000, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn preconditions() {
        let mut rng = RngStream::new(3);
        assert!(matches!(dkw_check(100, 0.05, 1000, &mut rng), Err(Error::Precondition(_))));
        assert!(matches!(dkw_check(100, 0.2, 999, &mut rng), Err(Error::Precondition(_))));
        assert!((dkw_floor(100) - 0.058_870_501).abs() < 1e-8);
    }
}
