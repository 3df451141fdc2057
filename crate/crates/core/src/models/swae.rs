use alloc::format;
use alloc::vec::Vec;

use super::mlp::{mlp_forward, Activation, MlpParams};
use super::params::{bind_leaves, ParamMut, ParamOptimizer, ParamRef, Parameterized};
use crate::error::{shape_err, Error, Result};
use crate::gradtape::{NodeId, Tape};
use crate::numerics::{DenseMatrix, RngStream};
use crate::sliced_ot::{primal_block_forward, PrimalBlockParams, RescaleGrad};
use crate::stiefel::orth_init;

/// Autoencoder whose encoder output is pushed through primal blocks toward
/// a batch of prior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SwaeModel {
    pub encoder: MlpParams,
    pub blocks: Vec<PrimalBlockParams>,
    pub decoder: MlpParams,
}

impl SwaeModel {
    pub fn new(encoder: MlpParams, blocks: Vec<PrimalBlockParams>, decoder: MlpParams) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Precondition("need at least one primal block".into()));
        }
        let r = encoder.output_dim();
        if blocks.iter().any(|b| b.dim() != r) || decoder.input_dim() != r {
            return Err(shape_err(format!("blocks and decoder must all have dimension {r}")));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(shape_err("decoder output must match the data dimension"));
        }
        Ok(Self {
            encoder,
            blocks,
            decoder,
        })
    }

    /// Linear encoder `data_dim → r`, `m` random blocks and a ReLU decoder
    /// with `hidden` layer widths.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        data_dim: usize,
        r: usize,
        m: usize,
        hidden: &[usize],
        bins: usize,
        alpha: f64,
        rescale_grad: RescaleGrad,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let encoder = MlpParams::init(&[data_dim, r], Activation::Linear, Activation::Linear, rng)?;
        let mut blocks = Vec::with_capacity(m);
        for _ in 0..m {
            let mut block = PrimalBlockParams::new(orth_init(r, rng)?, bins, alpha)?;
            block.rescale_grad = rescale_grad;
            blocks.push(block);
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(r);
        dims.extend_from_slice(hidden);
        dims.push(data_dim);
        let decoder = MlpParams::init(&dims, Activation::Relu, Activation::Linear, rng)?;
        Self::new(encoder, blocks, decoder)
    }

    pub fn r(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Appends `Q(M_x, M_z)` to `tape`. Returns the latent node.
    pub fn tape_encode(&self, tape: &mut Tape, params: &[NodeId], x: NodeId, z: NodeId) -> Result<NodeId> {
        let (ne, m) = (self.encoder.param_count(), self.blocks.len());
        if params.len() != ne + m + self.decoder.param_count() {
            return Err(shape_err("parameter nodes do not match the model"));
        }
        let mut h = self.encoder.tape(tape, &params[..ne], x)?;
        for (k, block) in self.blocks.iter().enumerate() {
            h = block.tape(tape, params[ne + k], h, z)?;
        }
        Ok(h)
    }

    /// Appends the reconstruction loss `(1/b)‖M_x − G(Q(M_x, M_z))‖²`.
    /// Returns `(loss, latent)`.
    pub fn tape_loss(&self, tape: &mut Tape, params: &[NodeId], mx: &DenseMatrix, mz: &DenseMatrix) -> Result<(NodeId, NodeId)> {
        self.check_batches(mx, mz)?;
        let x = tape.constant(mx.clone());
        let z = tape.constant(mz.clone());
        let latent = self.tape_encode(tape, params, x, z)?;
        let skip = self.encoder.param_count() + self.blocks.len();
        let recon = self.decoder.tape(tape, &params[skip..], latent)?;
        let diff = tape.sub(recon, x)?;
        let sq = tape.square(diff)?;
        let total = tape.sum(sq)?;
        let loss = tape.scale(total, 1.0 / mx.cols() as f64)?;
        Ok((loss, latent))
    }

    fn check_batches(&self, mx: &DenseMatrix, mz: &DenseMatrix) -> Result<()> {
        if mx.rows() != self.data_dim() || mz.rows() != self.r() || mx.cols() != mz.cols() {
            return Err(shape_err(format!(
                "expected {}×b data and {}×b noise, got {}×{} and {}×{}",
                self.data_dim(),
                self.r(),
                mx.rows(),
                mx.cols(),
                mz.rows(),
                mz.cols()
            )));
        }
        Ok(())
    }
}

impl Parameterized for SwaeModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        self.encoder.visit(&format!("{prefix}enc"), f);
        for (k, block) in self.blocks.iter().enumerate() {
            f(&format!("{prefix}block{k}.ortho"), ParamRef::Ortho(&block.ortho));
        }
        self.decoder.visit(&format!("{prefix}dec"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.encoder.visit_mut(&format!("{prefix}enc"), f);
        for (k, block) in self.blocks.iter_mut().enumerate() {
            f(&format!("{prefix}block{k}.ortho"), ParamMut::Ortho(&mut block.ortho));
        }
        self.decoder.visit_mut(&format!("{prefix}dec"), f);
    }
}

/// Latent codes `Q(M_x, M_z)`: the encoding of `M_x` transported through
/// every block toward the prior batch `M_z`.
pub fn swae_encode(model: &SwaeModel, mx: &DenseMatrix, mz: &DenseMatrix) -> Result<DenseMatrix> {
    model.check_batches(mx, mz)?;
    let mut h = mlp_forward(&model.encoder, mx)?;
    for block in &model.blocks {
        h = primal_block_forward(block, &h, mz)?;
    }
    Ok(h)
}

/// Reconstruction loss without an update.
pub fn swae_loss(model: &SwaeModel, mx: &DenseMatrix, mz: &DenseMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let params = bind_leaves(model, &mut tape, "");
    let (loss, _) = model.tape_loss(&mut tape, &params, mx, mz)?;
    Ok(tape.scalar(loss))
}

/// One optimizer step on the reconstruction loss. Returns the loss before
/// the update.
pub fn swae_train_step(
    model: &mut SwaeModel,
    opt: &mut ParamOptimizer,
    mx: &DenseMatrix,
    mz: &DenseMatrix,
) -> Result<f64> {
    let mut tape = Tape::new();
    let params = bind_leaves(model, &mut tape, "");
    let (loss, _) = model.tape_loss(&mut tape, &params, mx, mz)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { term: "reconstruction" });
    }
    let grads = tape.backward(loss, &params)?;
    opt.step(model, &grads)?;
    Ok(value)
}

/// Decodes prior samples: `G(M_z)`.
pub fn swae_generate(model: &SwaeModel, mz: &DenseMatrix) -> Result<DenseMatrix> {
    mlp_forward(&model.decoder, mz)
}
