use alloc::format;
use alloc::vec::Vec;

use super::mlp::{mlp_forward, Activation, MlpParams};
use super::params::{bind_constants, bind_leaves, ParamMut, ParamOptimizer, ParamRef, Parameterized};
use crate::dual_swd::{
    critic_values, swgan_disc_loss_tape, swgan_gen_loss_tape, wgan_gp_loss_tape, DiscDiagnostics, DiscLossNodes,
    Discriminator, DualBlockParams, SwganLossConfig,
};
use crate::error::{shape_err, Error, Result};
use crate::gradtape::{NodeId, Tape};
use crate::numerics::{DenseMatrix, RngStream};

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Generator plus a discriminator made of a shared encoder and dual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SwganModel {
    pub generator: MlpParams,
    pub disc: Discriminator,
    pub loss: SwganLossConfig,
}

impl SwganModel {
    pub fn new(generator: MlpParams, disc: Discriminator, loss: SwganLossConfig) -> Result<Self> {
        if generator.output_dim() != disc.encoder.input_dim() {
            return Err(shape_err("generator output must match the critic input"));
        }
        loss.validate()?;
        Ok(Self { generator, disc, loss })
    }

    /// ReLU generator and encoder with `hidden` widths; `m` blocks of
    /// dimension `r`.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        noise_dim: usize,
        data_dim: usize,
        hidden: &[usize],
        r: usize,
        m: usize,
        loss: SwganLossConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let generator = MlpParams::init(&dims(noise_dim, hidden, data_dim), Activation::Relu, Activation::Linear, rng)?;
        let encoder = MlpParams::init(&dims(data_dim, hidden, r), Activation::Relu, Activation::Linear, rng)?;
        let blocks = (0..m).map(|_| DualBlockParams::init(r, rng)).collect::<Result<Vec<_>>>()?;
        Self::new(generator, Discriminator::new(encoder, blocks)?, loss)
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.input_dim()
    }
}

impl Parameterized for SwganModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        self.generator.visit(&format!("{prefix}gen"), f);
        self.disc.visit(&format!("{prefix}disc"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.generator.visit_mut(&format!("{prefix}gen"), f);
        self.disc.visit_mut(&format!("{prefix}disc"), f);
    }
}

/// Generator plus a scalar-output critic network.
#[derive(Debug, Clone, PartialEq)]
pub struct WganGpModel {
    pub generator: MlpParams,
    pub critic: MlpParams,
    pub lambda: f64,
}

impl WganGpModel {
    pub fn init(noise_dim: usize, data_dim: usize, hidden: &[usize], lambda: f64, rng: &mut RngStream) -> Result<Self> {
        let generator = MlpParams::init(&dims(noise_dim, hidden, data_dim), Activation::Relu, Activation::Linear, rng)?;
        let critic = MlpParams::init(&dims(data_dim, hidden, 1), Activation::Relu, Activation::Linear, rng)?;
        Ok(Self {
            generator,
            critic,
            lambda,
        })
    }

    pub fn noise_dim(&self) -> usize {
        self.generator.input_dim()
    }
}

impl Parameterized for WganGpModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        self.generator.visit(&format!("{prefix}gen"), f);
        self.critic.visit(&format!("{prefix}critic"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.generator.visit_mut(&format!("{prefix}gen"), f);
        self.critic.visit_mut(&format!("{prefix}critic"), f);
    }
}

/// Separate optimizers for the two players.
#[derive(Debug, Clone, PartialEq)]
pub struct GanOptimizers {
    pub generator: ParamOptimizer,
    pub critic: ParamOptimizer,
}

/// Losses of one adversarial training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanStepReport {
    pub gen_loss: f64,
    /// Diagnostics of the last critic update.
    pub disc: DiscDiagnostics,
}

type CriticLoss<'a, C> =
    dyn Fn(&C, &mut Tape, &[NodeId], &DenseMatrix, &DenseMatrix, &mut RngStream) -> Result<DiscLossNodes> + 'a;
type GenLoss<'a, C> = dyn Fn(&C, &mut Tape, &[NodeId], NodeId) -> Result<NodeId> + 'a;

/// Runs one critic update per real batch in `batches`, then one generator
/// update. Noise batches and interpolation weights are drawn from `rng` in
/// a fixed order.
#[allow(clippy::too_many_arguments)]
fn gan_step<M, C>(
    model: &mut M,
    generator: fn(&mut M) -> &mut MlpParams,
    critic_of: fn(&mut M) -> &mut C,
    opts: &mut GanOptimizers,
    batches: &[DenseMatrix],
    rng: &mut RngStream,
    critic_loss: &CriticLoss<'_, C>,
    gen_loss: &GenLoss<'_, C>,
) -> Result<GanStepReport>
where
    C: Parameterized,
{
    if batches.is_empty() {
        return Err(Error::Precondition("need at least one real batch".into()));
    }
    let b = batches[0].cols();
    let noise_dim = generator(model).input_dim();
    let mut last = None;
    for mx in batches {
        if mx.cols() != b {
            return Err(shape_err("real batches must share one size"));
        }
        let mz = rng.gaussian_matrix(noise_dim, b);
        let mgz = mlp_forward(generator(model), &mz)?;
        let critic = critic_of(model);
        let mut tape = Tape::new();
        let params = bind_leaves(&*critic, &mut tape, "");
        let nodes = critic_loss(critic, &mut tape, &params, mx, &mgz, rng)?;
        let diag = nodes.diagnostics(&tape)?;
        let grads = tape.backward(nodes.loss, &params)?;
        opts.critic.step(critic, &grads)?;
        last = Some(diag);
    }

    let mz = rng.gaussian_matrix(noise_dim, b);
    let mut tape = Tape::new();
    let gen = generator(model);
    let gp = bind_leaves(&*gen, &mut tape, "");
    let z = tape.constant(mz);
    let gz = gen.tape(&mut tape, &gp, z)?;
    let critic = critic_of(model);
    let cp = bind_constants(&*critic, &mut tape, "");
    let loss = gen_loss(critic, &mut tape, &cp, gz)?;
    let gen_value = tape.scalar(loss);
    if !gen_value.is_finite() {
        return Err(Error::NonFiniteLoss { term: "generator" });
    }
    let grads = tape.backward(loss, &gp)?;
    opts.generator.step(generator(model), &grads)?;
    Ok(GanStepReport {
        gen_loss: gen_value,
        disc: last.expect("at least one batch"),
    })
}

/// One SWGAN step: a critic update per real batch, then a generator update.
pub fn swgan_train_step(
    model: &mut SwganModel,
    opts: &mut GanOptimizers,
    batches: &[DenseMatrix],
    rng: &mut RngStream,
) -> Result<GanStepReport> {
    let config = model.loss;
    gan_step(
        model,
        |m| &mut m.generator,
        |m| &mut m.disc,
        opts,
        batches,
        rng,
        &|disc, tape, params, mx, mgz, rng| swgan_disc_loss_tape(tape, disc, params, mx, mgz, &config, rng),
        &|disc, tape, params, gz| swgan_gen_loss_tape(tape, disc, params, gz),
    )
}

/// One WGAN-GP baseline step with the same orientation as SWGAN.
pub fn wgan_gp_train_step(
    model: &mut WganGpModel,
    opts: &mut GanOptimizers,
    batches: &[DenseMatrix],
    rng: &mut RngStream,
) -> Result<GanStepReport> {
    let lambda = model.lambda;
    gan_step(
        model,
        |m| &mut m.generator,
        |m| &mut m.critic,
        opts,
        batches,
        rng,
        &|critic, tape, params, mx, mgz, rng| wgan_gp_loss_tape(tape, critic, params, mx, mgz, lambda, rng),
        &|critic, tape, params, gz| {
            let d = critic.tape(tape, params, gz)?;
            tape.mean(d)
        },
    )
}

/// Samples from a generator: `G(M_z)`.
pub fn generate(generator: &MlpParams, mz: &DenseMatrix) -> Result<DenseMatrix> {
    mlp_forward(generator, mz)
}

/// Critic values of the SWGAN discriminator on the columns of `x`.
pub fn swgan_critic(model: &SwganModel, x: &DenseMatrix) -> Result<Vec<f64>> {
    critic_values(&model.disc, x)
}

/// Critic values of the baseline critic on the columns of `x`.
pub fn wgan_gp_critic(model: &WganGpModel, x: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(mlp_forward(&model.critic, x)?.into_vec())
}
