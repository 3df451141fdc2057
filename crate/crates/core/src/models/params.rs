use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gradtape::{NodeId, Tape};
use crate::numerics::DenseMatrix;
use crate::stiefel::{adam_step, stiefel_adam_step, AdamConfig, AdamState, OrthogonalMatrix, TangentRule};

pub enum ParamRef<'a> {
    Dense(&'a DenseMatrix),
    Ortho(&'a OrthogonalMatrix),
}

impl ParamRef<'_> {
    pub fn matrix(&self) -> &DenseMatrix {
        match self {
            ParamRef::Dense(m) => m,
            ParamRef::Ortho(o) => o.as_matrix(),
        }
    }
}

pub enum ParamMut<'a> {
    Dense(&'a mut DenseMatrix),
    Ortho(&'a mut OrthogonalMatrix),
}

/// Anything holding trainable matrices. Both visitors must walk the
/// parameters in the same order and under the same names; that order is
/// the canonical one used by optimizers, tapes and checkpoints.
pub trait Parameterized {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>));
}

/// Names of all parameters in canonical order.
pub fn param_names(model: &dyn Parameterized, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    model.visit(prefix, &mut |name, _| out.push(String::from(name)));
    out
}

/// Copies of all parameter values in canonical order.
pub fn param_values(model: &dyn Parameterized, prefix: &str) -> Vec<(String, DenseMatrix)> {
    let mut out = Vec::new();
    model.visit(prefix, &mut |name, p| out.push((String::from(name), p.matrix().clone())));
    out
}

/// Adds every parameter to `tape` as a named leaf, in canonical order.
pub fn bind_leaves(model: &dyn Parameterized, tape: &mut Tape, prefix: &str) -> Vec<NodeId> {
    let mut out = Vec::new();
    model.visit(prefix, &mut |name, p| out.push(tape.leaf(name, p.matrix().clone())));
    out
}

/// Adds every parameter to `tape` as a constant.
pub fn bind_constants(model: &dyn Parameterized, tape: &mut Tape, prefix: &str) -> Vec<NodeId> {
    let mut out = Vec::new();
    model.visit(prefix, &mut |_, p| out.push(tape.constant(p.matrix().clone())));
    out
}

/// Overwrites the parameter called `name`. Orthogonal parameters are
/// re-validated. Returns `Ok(false)` when no parameter has that name.
pub fn assign_param(model: &mut dyn Parameterized, prefix: &str, name: &str, value: &DenseMatrix) -> Result<bool> {
    let mut outcome = Ok(false);
    model.visit_mut(prefix, &mut |n, p| {
        if n != name {
            return;
        }
        outcome = match p {
            ParamMut::Dense(m) if m.shape() == value.shape() => {
                *m = value.clone();
                Ok(true)
            }
            ParamMut::Ortho(o) if o.as_matrix().shape() == value.shape() => {
                OrthogonalMatrix::new(value.clone()).map(|v| {
                    *o = v;
                    true
                })
            }
            _ => Err(shape_err(format!("parameter {name}: stored shape does not match"))),
        };
    });
    outcome
}

/// Adam for every dense parameter and Stiefel-Adam for every orthogonal
/// one, with one state per parameter in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamOptimizer {
    pub states: Vec<AdamState>,
    pub rule: TangentRule,
}

impl ParamOptimizer {
    pub fn new(model: &dyn Parameterized, config: AdamConfig, rule: TangentRule) -> Self {
        let mut states = Vec::new();
        model.visit("", &mut |_, p| states.push(AdamState::for_param(p.matrix(), config)));
        Self { states, rule }
    }

    /// Applies one update. `grads` follows the canonical order.
    pub fn step(&mut self, model: &mut dyn Parameterized, grads: &[DenseMatrix]) -> Result<()> {
        if grads.len() != self.states.len() {
            return Err(shape_err(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.states.len()
            )));
        }
        let mut k = 0;
        let mut result: Result<()> = Ok(());
        let rule = self.rule;
        let states = &mut self.states;
        model.visit_mut("", &mut |_, p| {
            if result.is_err() {
                return;
            }
            let (state, grad) = match (states.get_mut(k), grads.get(k)) {
                (Some(s), Some(g)) => (s, g),
                _ => {
                    result = Err(Error::Precondition("optimizer does not match the model".into()));
                    return;
                }
            };
            k += 1;
            result = match p {
                ParamMut::Dense(m) => adam_step(state, m, grad),
                ParamMut::Ortho(o) => stiefel_adam_step(state, o, grad, rule),
            };
        });
        result?;
        if k != self.states.len() {
            return Err(Error::Precondition("optimizer does not match the model".into()));
        }
        Ok(())
    }
}
