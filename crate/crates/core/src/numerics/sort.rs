use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Stable ascending sort. Returns the sorted values and the permutation
/// `perm` with `sorted[k] = v[perm[k]]`; ties keep their input order.
pub fn sort_with_ranks(v: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFiniteInput);
    }
    let mut perm: Vec<usize> = (0..v.len()).collect();
    perm.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let sorted = perm.iter().map(|&i| v[i]).collect();
    Ok((sorted, perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn matches_enumeration() {
        let v = [3.0, 1.0, 2.0];
        // the unique permutation whose image is nondecreasing
        let expected: Vec<Vec<usize>> = permutations(3)
            .into_iter()
            .filter(|p| p.windows(2).all(|w| v[w[0]] <= v[w[1]]))
            .collect();
        assert_eq!(expected, vec![vec![1, 2, 0]]);
        let (s, p) = sort_with_ranks(&v).unwrap();
        assert_eq!(s, vec![1.0, 2.0, 3.0]);
        assert_eq!(p, expected[0]);
    }

    #[test]
    fn ties_are_stable() {
        let (_, p) = sort_with_ranks(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
    }

    #[test]
    fn empty_and_nan() {
        let (s, p) = sort_with_ranks(&[]).unwrap();
        assert!(s.is_empty() && p.is_empty());
        assert_eq!(sort_with_ranks(&[1.0, f64::NAN]), Err(Error::NonFiniteInput));
    }
}
