use alloc::format;
use core::str::FromStr;

use crate::dual_swd::SwganLossConfig;
use crate::error::{Error, Result};
use crate::evaldata::ToyKind;
use crate::sliced_ot::RescaleGrad;
use crate::stiefel::{AdamConfig, TangentRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Swae,
    Swgan,
    WganGp,
    Idt,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Swae => "swae",
            ModelKind::Swgan => "swgan",
            ModelKind::WganGp => "wgan-gp-baseline",
            ModelKind::Idt => "idt-baseline",
        }
    }

    pub fn has_critic(self) -> bool {
        matches!(self, ModelKind::Swgan | ModelKind::WganGp)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swae" => Ok(ModelKind::Swae),
            "swgan" => Ok(ModelKind::Swgan),
            "wgan-gp-baseline" | "wgan-gp" => Ok(ModelKind::WganGp),
            "idt-baseline" | "idt" => Ok(ModelKind::Idt),
            _ => Err(Error::Precondition(format!("unknown model kind `{s}`"))),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dataset: ToyKind,
    pub seed: u64,
    /// Total steps `h`.
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Critic updates per generator update.
    pub disc_iters: usize,
    /// Block dimension.
    pub r: usize,
    /// Number of blocks.
    pub m: usize,
    /// Histogram bins `l`.
    pub bins: usize,
    /// Histogram softness `α`.
    pub alpha: f64,
    pub loss: SwganLossConfig,
    /// Gradient-penalty weight of the WGAN-GP baseline.
    pub gp_lambda: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Generator input dimension (GANs only).
    pub noise_dim: usize,
    pub tangent_rule: TangentRule,
    pub rescale_grad: RescaleGrad,
}

impl TrainConfig {
    /// Toy defaults for `kind`.
    pub fn default_for(kind: ModelKind) -> Self {
        let r = match kind {
            ModelKind::Swgan => 128,
            _ => 2,
        };
        Self {
            kind,
            dataset: ToyKind::SwissRoll,
            seed: 0,
            steps: 10_000,
            batch_size: 256,
            lr: 3e-4,
            beta1: 0.5,
            beta2: 0.9,
            disc_iters: 5,
            r,
            m: 1,
            bins: 32,
            alpha: 1.0,
            loss: SwganLossConfig::default(),
            gp_lambda: 10.0,
            hidden_width: 512,
            hidden_layers: 3,
            noise_dim: 2,
            tangent_rule: TangentRule::Reflected,
            rescale_grad: RescaleGrad::Flow,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("disc_iters", self.disc_iters),
            ("r", self.r),
            ("m", self.m),
            ("hidden_width", self.hidden_width),
            ("noise_dim", self.noise_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Precondition(format!("{name} must be positive")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::Precondition("batch_size must be at least 2".into()));
        }
        if self.bins < 2 {
            return Err(Error::Precondition("bins must be at least 2".into()));
        }
        for (name, v) in [("lr", self.lr), ("alpha", self.alpha)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Precondition(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !self.gp_lambda.is_finite() || self.gp_lambda < 0.0 {
            return Err(Error::Precondition(format!("gp_lambda must be ≥ 0, got {}", self.gp_lambda)));
        }
        self.loss.validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::default_for(ModelKind::Swgan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.bins, c.alpha, c.disc_iters, c.batch_size), (3e-4, 32, 1.0, 5, 256));
        assert_eq!((c.loss.lambda1, c.loss.lambda2, c.loss.k, c.loss.k_prime), (20.0, 10.0, 1e-3, 0.0));
        assert_eq!((c.r, c.m), (128, 1));
        assert!(c.validate().is_ok());
        let bad = TrainConfig { bins: 1, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { lr: -1.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn kind_names() {
        for k in [ModelKind::Swae, ModelKind::Swgan, ModelKind::WganGp, ModelKind::Idt] {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!(ModelKind::Swgan.has_critic() && !ModelKind::Swae.has_critic());
    }
}
