use alloc::vec;
use alloc::vec::Vec;

use super::config::{ModelKind, TrainConfig};
use super::params::{ParamMut, ParamOptimizer, ParamRef, Parameterized};
use super::swae::{swae_encode, swae_generate, swae_train_step, SwaeModel};
use super::swgan::{
    generate, swgan_critic, swgan_train_step, wgan_gp_critic, wgan_gp_train_step, GanOptimizers, SwganModel,
    WganGpModel,
};
use crate::error::{Error, Result};
use crate::evaldata::{sample_toy, ToyDatasetSpec};
use crate::numerics::{DenseMatrix, RngStream};

/// Stream ids derived from the run seed.
const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// Toy data is two-dimensional.
pub const DATA_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Swae(SwaeModel),
    Swgan(SwganModel),
    WganGp(WganGpModel),
}

impl Parameterized for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        match self {
            Model::Swae(m) => m.visit(prefix, f),
            Model::Swgan(m) => m.visit(prefix, f),
            Model::WganGp(m) => m.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        match self {
            Model::Swae(m) => m.visit_mut(prefix, f),
            Model::Swgan(m) => m.visit_mut(prefix, f),
            Model::WganGp(m) => m.visit_mut(prefix, f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizers {
    Single(ParamOptimizer),
    Gan(GanOptimizers),
}

/// Losses of one training step. Fields a model does not produce are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Reconstruction loss (SWAE) or generator loss (GANs).
    pub loss_g: f64,
    pub loss_d: Option<f64>,
    pub penalty1: Option<f64>,
    pub penalty2: Option<f64>,
}

/// A model, its optimizer state and the training stream. Two trainers
/// built from the same config take bit-identical steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizers: Optimizers,
    pub rng: RngStream,
    pub step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init = RngStream::with_stream(config.seed, INIT_STREAM);
        let hidden = vec![config.hidden_width; config.hidden_layers];
        let adam = config.adam();
        let rule = config.tangent_rule;
        let (model, optimizers) = match config.kind {
            ModelKind::Swae => {
                let m = SwaeModel::init(
                    DATA_DIM,
                    config.r,
                    config.m,
                    &hidden,
                    config.bins,
                    config.alpha,
                    config.rescale_grad,
                    &mut init,
                )?;
                let opt = ParamOptimizer::new(&m, adam, rule);
                (Model::Swae(m), Optimizers::Single(opt))
            }
            ModelKind::Swgan => {
                let m = SwganModel::init(config.noise_dim, DATA_DIM, &hidden, config.r, config.m, config.loss, &mut init)?;
                let opts = GanOptimizers {
                    generator: ParamOptimizer::new(&m.generator, adam, rule),
                    critic: ParamOptimizer::new(&m.disc, adam, rule),
                };
                (Model::Swgan(m), Optimizers::Gan(opts))
            }
            ModelKind::WganGp => {
                let m = WganGpModel::init(config.noise_dim, DATA_DIM, &hidden, config.gp_lambda, &mut init)?;
                let opts = GanOptimizers {
                    generator: ParamOptimizer::new(&m.generator, adam, rule),
                    critic: ParamOptimizer::new(&m.critic, adam, rule),
                };
                (Model::WganGp(m), Optimizers::Gan(opts))
            }
            ModelKind::Idt => return Err(Error::Precondition("the IDT baseline has no trainable model".into())),
        };
        Ok(Self {
            rng: RngStream::with_stream(config.seed, TRAIN_STREAM),
            config,
            model,
            optimizers,
            step: 0,
        })
    }

    pub fn dataset(&self) -> ToyDatasetSpec {
        ToyDatasetSpec::default_for(self.config.dataset)
    }

    /// Dimension of the samples fed to the generator or decoder.
    pub fn noise_dim(&self) -> usize {
        match &self.model {
            Model::Swae(m) => m.r(),
            Model::Swgan(m) => m.noise_dim(),
            Model::WganGp(m) => m.noise_dim(),
        }
    }

    pub fn train_step(&mut self) -> Result<StepReport> {
        let spec = self.dataset();
        let b = self.config.batch_size;
        let report = match (&mut self.model, &mut self.optimizers) {
            (Model::Swae(m), Optimizers::Single(opt)) => {
                let mx = sample_toy(&spec, b, &mut self.rng)?;
                let mz = self.rng.gaussian_matrix(m.r(), b);
                let loss = swae_train_step(m, opt, &mx, &mz)?;
                StepReport {
                    loss_g: loss,
                    loss_d: None,
                    penalty1: None,
                    penalty2: None,
                }
            }
            (model, Optimizers::Gan(opts)) => {
                let batches = (0..self.config.disc_iters)
                    .map(|_| sample_toy(&spec, b, &mut self.rng))
                    .collect::<Result<Vec<_>>>()?;
                let r = match model {
                    Model::Swgan(m) => swgan_train_step(m, opts, &batches, &mut self.rng)?,
                    Model::WganGp(m) => wgan_gp_train_step(m, opts, &batches, &mut self.rng)?,
                    Model::Swae(_) => unreachable!("SWAE models always carry a single optimizer"),
                };
                StepReport {
                    loss_g: r.gen_loss,
                    loss_d: Some(r.disc.loss),
                    penalty1: Some(r.disc.penalty1),
                    penalty2: Some(r.disc.penalty2),
                }
            }
            (Model::Swgan(_) | Model::WganGp(_), Optimizers::Single(_)) => {
                return Err(Error::Precondition("GAN models need two optimizers".into()))
            }
        };
        self.step += 1;
        Ok(report)
    }

    /// `n` generated samples from fresh prior draws.
    pub fn generate(&self, n: usize, rng: &mut RngStream) -> Result<DenseMatrix> {
        let mz = rng.gaussian_matrix(self.noise_dim(), n);
        match &self.model {
            Model::Swae(m) => swae_generate(m, &mz),
            Model::Swgan(m) => generate(&m.generator, &mz),
            Model::WganGp(m) => generate(&m.generator, &mz),
        }
    }

    /// SWAE latent codes of `mx` transported toward a fresh prior batch.
    pub fn latents(&self, mx: &DenseMatrix, rng: &mut RngStream) -> Result<DenseMatrix> {
        match &self.model {
            Model::Swae(m) => {
                let mz = rng.gaussian_matrix(m.r(), mx.cols());
                swae_encode(m, mx, &mz)
            }
            _ => Err(Error::Precondition("only SWAE models have latent codes".into())),
        }
    }

    /// Critic values on the columns of `x`.
    pub fn critic(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        match &self.model {
            Model::Swgan(m) => swgan_critic(m, x),
            Model::WganGp(m) => wgan_gp_critic(m, x),
            Model::Swae(_) => Err(Error::Precondition("SWAE models have no critic".into())),
        }
    }

    /// Optimizers with their checkpoint names, in a fixed order.
    pub fn optimizer_list(&self) -> Vec<(&'static str, &ParamOptimizer)> {
        match &self.optimizers {
            Optimizers::Single(o) => vec![("opt", o)],
            Optimizers::Gan(g) => vec![("opt_gen", &g.generator), ("opt_critic", &g.critic)],
        }
    }

    pub fn optimizer_list_mut(&mut self) -> Vec<(&'static str, &mut ParamOptimizer)> {
        match &mut self.optimizers {
            Optimizers::Single(o) => vec![("opt", o)],
            Optimizers::Gan(g) => vec![("opt_gen", &mut g.generator), ("opt_critic", &mut g.critic)],
        }
    }
}
