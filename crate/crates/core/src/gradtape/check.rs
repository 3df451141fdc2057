use alloc::format;
use alloc::vec::Vec;

use super::{NodeId, Op, Tape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// Largest `|analytic - numeric| / (|numeric| + 1e-8)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose stencil crossed a kink or a bucket boundary.
    pub skipped: usize,
}

/// Everything that selects a smooth piece of the tape: activation signs,
/// extremum positions and the values of index-producing nodes.
fn discrete_state(tape: &Tape) -> Vec<u64> {
    let mut sig = Vec::new();
    for node in &tape.nodes {
        let input = |k: usize| &tape.nodes[node.inputs[k].0].value;
        match node.op {
            Op::LeakyRelu { .. } | Op::Elu | Op::EluDeriv => {
                sig.extend(input(0).as_slice().iter().map(|v| (*v > 0.0) as u64))
            }
            Op::RowMin | Op::RowMax => {
                let x = input(0);
                let max = matches!(node.op, Op::RowMax);
                for i in 0..x.rows() {
                    sig.push(super::ops::row_extremum(x.row(i), max) as u64);
                }
            }
            Op::Step | Op::RowArgMask { .. } | Op::Bucket { .. } | Op::SearchSorted => {
                sig.extend(node.value.as_slice().iter().map(|v| v.to_bits()))
            }
            _ => {}
        }
    }
    sig
}

/// Compares the gradient of the scalar `output` with respect to the leaves
/// `wrt` against a five-point central difference with step `h`.
///
/// Entries whose stencil changes the discrete state of the tape (a
/// leaky-relu sign flip, a new arg-extremum, a bucket change) are skipped
/// rather than compared, so the check is evaluated away from knots.
pub fn finite_diff_check(tape: &Tape, output: NodeId, wrt: &[NodeId], h: f64) -> Result<FdReport> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::Precondition(format!("step {h} outside [1e-8, 1e-4]")));
    }
    if let Some(bad) = wrt.iter().find(|w| tape.op(**w) != &Op::Leaf) {
        return Err(Error::Precondition(format!("node {} is not a leaf", bad.0)));
    }
    let analytic = tape.backward(output, wrt)?;
    let base_state = discrete_state(tape);
    let mut work = tape.clone();
    let mut report = FdReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for (leaf, grad) in wrt.iter().zip(&analytic) {
        let original = tape.value(*leaf).clone();
        for e in 0..original.len() {
            let mut probe = |offset: f64| -> Result<(f64, bool)> {
                let v = work.leaf_value_mut(*leaf);
                v.as_mut_slice()[e] = original.as_slice()[e] + offset;
                work.recompute_from(leaf.0)?;
                Ok((work.scalar(output), discrete_state(&work) == base_state))
            };
            let (f2, s2) = probe(2.0 * h)?;
            let (f1, s1) = probe(h)?;
            let (m1, t1) = probe(-h)?;
            let (m2, t2) = probe(-2.0 * h)?;
            work.leaf_value_mut(*leaf).as_mut_slice()[e] = original.as_slice()[e];
            if !(s2 && s1 && t1 && t2) {
                report.skipped += 1;
                continue;
            }
            let numeric = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h);
            let a = grad.as_slice()[e];
            let err = (a - numeric).abs() / (numeric.abs() + 1e-8);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
        work.recompute_from(leaf.0)?;
    }
    Ok(report)
}
