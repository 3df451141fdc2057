use alloc::format;
use alloc::vec::Vec;

use super::params::{ParamMut, ParamRef, Parameterized};
use crate::error::{shape_err, Error, Result};
use crate::gradtape::{NodeId, Tape};
use crate::numerics::{DenseMatrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Elu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0 * v
                }
            }
            Activation::LeakyRelu(slope) => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    libm::expm1(v)
                }
            }
            Activation::Tanh => libm::tanh(v),
            Activation::Linear => v,
        }
    }

    fn tape(self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(slope) => tape.leaky_relu(x, slope),
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Linear => Ok(x),
        }
    }
}

/// Dense layer acting on columns: `act(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out×in`.
    pub weight: DenseMatrix,
    /// `out×1`.
    pub bias: DenseMatrix,
    pub activation: Activation,
}

/// Fully connected network. Samples are columns of the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Precondition("a network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.shape() != (layer.weight.rows(), 1) {
                return Err(shape_err(format!("layer {i}: bias must be a column matching the weight rows")));
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(Error::NonFiniteInput);
            }
            if i > 0 && layers[i - 1].weight.rows() != layer.weight.cols() {
                return Err(shape_err(format!(
                    "layer {i} takes {} inputs but the previous layer produces {}",
                    layer.weight.cols(),
                    layers[i - 1].weight.rows()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Network with layer widths `dims` (input first). Weights and biases
    /// are drawn from `U(−1/√fan_in, 1/√fan_in)`. Hidden layers use
    /// `hidden`, the last layer `output`.
    pub fn init(dims: &[usize], hidden: Activation, output: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Precondition(format!("invalid layer widths {dims:?}")));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            let weight = rng.uniform_matrix(fan_out, fan_in).map(|u| bound * (2.0 * u - 1.0));
            let bias = rng.uniform_matrix(fan_out, 1).map(|u| bound * (2.0 * u - 1.0));
            let activation = if i + 2 == dims.len() { output } else { hidden };
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows()
    }

    /// Two tape nodes (weight, bias) per layer.
    pub fn param_count(&self) -> usize {
        2 * self.layers.len()
    }

    /// Appends the network to `tape`. `params` holds the weight and bias
    /// nodes in visiting order; `x` is `in×b`.
    pub fn tape(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        if params.len() != self.param_count() {
            return Err(shape_err(format!(
                "expected {} parameter nodes, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut h = x;
        for (layer, p) in self.layers.iter().zip(params.chunks(2)) {
            let z = tape.matmul(p[0], h)?;
            let z = tape.add_col(z, p[1])?;
            h = layer.activation.tape(tape, z)?;
        }
        Ok(h)
    }
}

impl Parameterized for MlpParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            f(&format!("{prefix}.{i}.weight"), ParamRef::Dense(&layer.weight));
            f(&format!("{prefix}.{i}.bias"), ParamRef::Dense(&layer.bias));
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            f(&format!("{prefix}.{i}.weight"), ParamMut::Dense(&mut layer.weight));
            f(&format!("{prefix}.{i}.bias"), ParamMut::Dense(&mut layer.bias));
        }
    }
}

/// Evaluates the network directly, without a tape. Matches
/// [`MlpParams::tape`] bit for bit.
pub fn mlp_forward(p: &MlpParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() != p.input_dim() {
        return Err(shape_err(format!(
            "network expects {} input rows, got {}",
            p.input_dim(),
            x.rows()
        )));
    }
    let mut h = x.clone();
    for layer in &p.layers {
        let mut z = layer.weight.matmul(&h)?;
        let cols = z.cols();
        let act = layer.activation;
        for (i, row) in z.as_mut_slice().chunks_mut(cols).enumerate() {
            let b = layer.bias.as_slice()[i];
            for v in row {
                *v = act.apply(*v + b);
            }
        }
        h = z;
    }
    Ok(h)
}
