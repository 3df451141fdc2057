//! Toy-scale networks, the sliced Wasserstein autoencoder and GAN, and their
//! training steps.

mod config;
mod mlp;
mod params;
mod swae;
mod swgan;
mod trainer;

pub use config::{ModelKind, TrainConfig};
pub use mlp::{mlp_forward, Activation, Layer, MlpParams};
pub use params::{
    assign_param, bind_constants, bind_leaves, param_names, param_values, ParamMut, ParamOptimizer, ParamRef,
    Parameterized,
};
pub use swae::{swae_encode, swae_generate, swae_loss, swae_train_step, SwaeModel};
pub use swgan::{
    generate, swgan_critic, swgan_train_step, wgan_gp_critic, wgan_gp_train_step, GanOptimizers, GanStepReport,
    SwganModel, WganGpModel,
};
pub use trainer::{Model, Optimizers, StepReport, Trainer, DATA_DIM};
