//! The dual sliced Wasserstein block, the discriminator built from it and
//! the adversarial losses with their gradient penalties.
//!
//! Loss orientation: the discriminator minimizes
//! `mean D(real) − mean D(fake) + penalties` and the generator minimizes
//! `mean D(fake)`. The critic value of a sample is the mean over all `m·r`
//! block outputs.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::gradtape::{NodeId, Tape};
use crate::models::{bind_leaves, mlp_forward, MlpParams, ParamMut, ParamRef, Parameterized};
use crate::numerics::{DenseMatrix, RngStream};
use crate::stiefel::{orth_init, OrthogonalMatrix};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// One dual block: `F_i(y) = u_i·LeakyReLU(w_i·θ_iᵀy + v_i)` for each
/// column `θ_i` of `ortho`. `u`, `v`, `w` are `r×1` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBlockParams {
    pub ortho: OrthogonalMatrix,
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    pub w: DenseMatrix,
    pub slope: f64,
}

impl DualBlockParams {
    pub fn new(ortho: OrthogonalMatrix, u: DenseMatrix, v: DenseMatrix, w: DenseMatrix) -> Result<Self> {
        let r = ortho.dim();
        for (name, m) in [("u", &u), ("v", &v), ("w", &w)] {
            if m.shape() != (r, 1) {
                return Err(shape_err(format!("{name} must be {r}x1, got {}x{}", m.rows(), m.cols())));
            }
        }
        Ok(Self {
            ortho,
            u,
            v,
            w,
            slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    /// Random projections, `w = 1`, `v = 0`, `u ~ U(−1, 1)`.
    pub fn init(r: usize, rng: &mut RngStream) -> Result<Self> {
        let ortho = orth_init(r, rng)?;
        let u = rng.uniform_matrix(r, 1).map(|x| 2.0 * x - 1.0);
        Self::new(ortho, u, DenseMatrix::zeros(r, 1), DenseMatrix::filled(r, 1, 1.0))
    }

    pub fn dim(&self) -> usize {
        self.ortho.dim()
    }

    /// Appends the block to `tape`. `p` holds the `ortho, u, v, w` nodes and
    /// `my` is `r×b`. Returns the `r×b` outputs and the projections `y'`.
    pub fn tape(&self, tape: &mut Tape, p: &[NodeId], my: NodeId) -> Result<(NodeId, NodeId)> {
        if p.len() != 4 {
            return Err(shape_err(format!("a dual block takes 4 parameter nodes, got {}", p.len())));
        }
        let ot = tape.transpose(p[0])?;
        let yp = tape.matmul(ot, my)?;
        let z = tape.mul_col(yp, p[3])?;
        let z = tape.add_col(z, p[2])?;
        let a = tape.leaky_relu(z, self.slope)?;
        let f = tape.mul_col(a, p[1])?;
        Ok((f, yp))
    }

    /// `r×b` outputs without a tape; same arithmetic as [`Self::tape`].
    fn apply(&self, my: &DenseMatrix) -> Result<DenseMatrix> {
        if my.rows() != self.dim() {
            return Err(shape_err(format!(
                "dual block of dimension {} got {} input rows",
                self.dim(),
                my.rows()
            )));
        }
        let mut out = self.ortho.as_matrix().transpose().matmul(my)?;
        let b = out.cols();
        for (i, row) in out.as_mut_slice().chunks_mut(b).enumerate() {
            let (u, v, w) = (self.u.as_slice()[i], self.v.as_slice()[i], self.w.as_slice()[i]);
            for y in row {
                let z = *y * w + v;
                let a = if z > 0.0 { z } else { self.slope * z };
                *y = a * u;
            }
        }
        Ok(out)
    }
}

impl Parameterized for DualBlockParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        f(&format!("{prefix}.ortho"), ParamRef::Ortho(&self.ortho));
        f(&format!("{prefix}.u"), ParamRef::Dense(&self.u));
        f(&format!("{prefix}.v"), ParamRef::Dense(&self.v));
        f(&format!("{prefix}.w"), ParamRef::Dense(&self.w));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        f(&format!("{prefix}.ortho"), ParamMut::Ortho(&mut self.ortho));
        f(&format!("{prefix}.u"), ParamMut::Dense(&mut self.u));
        f(&format!("{prefix}.v"), ParamMut::Dense(&mut self.v));
        f(&format!("{prefix}.w"), ParamMut::Dense(&mut self.w));
    }
}

/// Block outputs for the columns of `my`, one row per sample (`b×r`).
pub fn dual_block_forward(params: &DualBlockParams, my: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(params.apply(my)?.transpose())
}

/// Shared encoder followed by `m` dual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub encoder: MlpParams,
    pub blocks: Vec<DualBlockParams>,
}

/// Tape nodes of one discriminator evaluation.
#[derive(Debug, Clone)]
pub struct DiscNodes {
    /// Encoder output, `r×b`.
    pub encoded: NodeId,
    /// Per block: outputs `F` and projections `y'`, both `r×b`.
    pub blocks: Vec<(NodeId, NodeId)>,
    /// `Σ_j critic(x_j)`, a scalar.
    pub critic_sum: NodeId,
}

impl Discriminator {
    pub fn new(encoder: MlpParams, blocks: Vec<DualBlockParams>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Precondition("need at least one dual block".into()));
        }
        let r = encoder.output_dim();
        if let Some(bad) = blocks.iter().find(|b| b.dim() != r) {
            return Err(shape_err(format!(
                "encoder produces {r} features but a block has dimension {}",
                bad.dim()
            )));
        }
        Ok(Self { encoder, blocks })
    }

    pub fn r(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + 4 * self.blocks.len()
    }

    /// Runs the blocks on an already encoded batch.
    pub fn tape_blocks(&self, tape: &mut Tape, params: &[NodeId], encoded: NodeId) -> Result<Vec<(NodeId, NodeId)>> {
        let skip = self.encoder.param_count();
        self.blocks
            .iter()
            .zip(params[skip..].chunks(4))
            .map(|(block, p)| block.tape(tape, p, encoded))
            .collect()
    }

    /// `Σ_j critic(x_j)` from block outputs: the sum of all entries over
    /// `m·r`.
    fn critic_sum(&self, tape: &mut Tape, blocks: &[(NodeId, NodeId)]) -> Result<NodeId> {
        let mut total = tape.sum(blocks[0].0)?;
        for (f, _) in &blocks[1..] {
            let s = tape.sum(*f)?;
            total = tape.add(total, s)?;
        }
        tape.scale(total, 1.0 / (self.m() * self.r()) as f64)
    }

    /// Full evaluation on the `n×b` batch `x`.
    pub fn tape(&self, tape: &mut Tape, params: &[NodeId], x: NodeId) -> Result<DiscNodes> {
        if params.len() != self.param_count() {
            return Err(shape_err(format!(
                "expected {} parameter nodes, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let encoded = self.encoder.tape(tape, &params[..self.encoder.param_count()], x)?;
        let blocks = self.tape_blocks(tape, params, encoded)?;
        let critic_sum = self.critic_sum(tape, &blocks)?;
        Ok(DiscNodes {
            encoded,
            blocks,
            critic_sum,
        })
    }
}

impl Parameterized for Discriminator {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamRef<'_>)) {
        self.encoder.visit(&format!("{prefix}.enc"), f);
        for (k, block) in self.blocks.iter().enumerate() {
            block.visit(&format!("{prefix}.block{k}"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamMut<'_>)) {
        self.encoder.visit_mut(&format!("{prefix}.enc"), f);
        for (k, block) in self.blocks.iter_mut().enumerate() {
            block.visit_mut(&format!("{prefix}.block{k}"), f);
        }
    }
}

/// All block outputs on the shared encoding of the `n×b` batch `x`, one
/// row per sample (`b×(m·r)`).
pub fn discriminator_forward(disc: &Discriminator, x: &DenseMatrix) -> Result<DenseMatrix> {
    let encoded = mlp_forward(&disc.encoder, x)?;
    let (r, b) = (disc.r(), x.cols());
    let mut out = DenseMatrix::zeros(b, disc.m() * r);
    for (k, block) in disc.blocks.iter().enumerate() {
        let f = block.apply(&encoded)?;
        for i in 0..r {
            for (j, v) in f.row(i).iter().enumerate() {
                out[(j, k * r + i)] = *v;
            }
        }
    }
    Ok(out)
}

/// Critic value per sample: the mean of its `m·r` discriminator outputs.
pub fn critic_values(disc: &Discriminator, x: &DenseMatrix) -> Result<Vec<f64>> {
    let out = discriminator_forward(disc, x)?;
    let width = out.cols() as f64;
    Ok((0..out.rows()).map(|j| out.row(j).iter().sum::<f64>() / width).collect())
}

/// Columnwise `(1 − μ_l)·a_l + μ_l·b_l`.
pub fn interpolate_with(a: &DenseMatrix, b: &DenseMatrix, mus: &[f64]) -> Result<DenseMatrix> {
    a.require_same_shape(b)?;
    if mus.len() != a.cols() {
        return Err(shape_err(format!("{} weights for {} columns", mus.len(), a.cols())));
    }
    let cols = a.cols();
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .enumerate()
        .map(|(k, (x, y))| {
            let mu = mus[k % cols];
            (1.0 - mu) * x + mu * y
        })
        .collect();
    DenseMatrix::new(a.rows(), cols, data)
}

/// Random columnwise interpolates with `μ ~ U[0, 1)`. Returns the weights
/// alongside so the result can be replayed.
pub fn interpolates(a: &DenseMatrix, b: &DenseMatrix, rng: &mut RngStream) -> Result<(DenseMatrix, Vec<f64>)> {
    a.require_same_shape(b)?;
    let mus = rng.uniform(a.cols());
    Ok((interpolate_with(a, b, &mus)?, mus))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwganLossConfig {
    /// Weight of the input-gradient penalty.
    pub lambda1: f64,
    /// Weight of the per-dimension block-gradient penalty.
    pub lambda2: f64,
    /// Target slope of each `F_i`.
    pub k: f64,
    /// Target entry of the input gradient.
    pub k_prime: f64,
}

impl Default for SwganLossConfig {
    fn default() -> Self {
        Self {
            lambda1: 20.0,
            lambda2: 10.0,
            k: 1e-3,
            k_prime: 0.0,
        }
    }
}

impl SwganLossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("k", self.k),
            ("k_prime", self.k_prime),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Precondition(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Scalar nodes of a discriminator loss.
#[derive(Debug, Clone, Copy)]
pub struct DiscLossNodes {
    pub loss: NodeId,
    pub critic_real: NodeId,
    pub critic_fake: NodeId,
    pub penalty1: NodeId,
    pub penalty2: NodeId,
}

/// Values of a discriminator loss and its terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscDiagnostics {
    pub loss: f64,
    pub critic_real: f64,
    pub critic_fake: f64,
    pub penalty1: f64,
    pub penalty2: f64,
}

impl DiscLossNodes {
    /// Reads the values and rejects non-finite terms, naming the first one.
    pub fn diagnostics(&self, tape: &Tape) -> Result<DiscDiagnostics> {
        let d = DiscDiagnostics {
            loss: tape.scalar(self.loss),
            critic_real: tape.scalar(self.critic_real),
            critic_fake: tape.scalar(self.critic_fake),
            penalty1: tape.scalar(self.penalty1),
            penalty2: tape.scalar(self.penalty2),
        };
        for (term, v) in [
            ("critic_real", d.critic_real),
            ("critic_fake", d.critic_fake),
            ("penalty1", d.penalty1),
            ("penalty2", d.penalty2),
            ("loss", d.loss),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss { term });
            }
        }
        Ok(d)
    }
}

fn check_batches(n: usize, mx: &DenseMatrix, mgz: &DenseMatrix) -> Result<()> {
    mx.require_same_shape(mgz)?;
    if mx.rows() != n {
        return Err(shape_err(format!("critic expects {n} input rows, got {}", mx.rows())));
    }
    Ok(())
}

/// `Σ (g − target)² / b` for a gradient node `g` with `b` columns.
fn penalty(tape: &mut Tape, g: NodeId, target: f64, b: usize) -> Result<NodeId> {
    let d = tape.affine(g, 1.0, -target)?;
    let sq = tape.square(d)?;
    let s = tape.sum(sq)?;
    tape.scale(s, 1.0 / b as f64)
}

/// Builds the discriminator loss on `tape`. `params` are the nodes bound to
/// `disc` in canonical order; `mx` and `mgz` are real and generated `n×b`
/// batches (the generated one enters as a constant). Draws `2b` uniforms
/// from `rng`: first the data-space weights, then the latent ones.
pub fn swgan_disc_loss_tape(
    tape: &mut Tape,
    disc: &Discriminator,
    params: &[NodeId],
    mx: &DenseMatrix,
    mgz: &DenseMatrix,
    config: &SwganLossConfig,
    rng: &mut RngStream,
) -> Result<DiscLossNodes> {
    config.validate()?;
    check_batches(disc.encoder.input_dim(), mx, mgz)?;
    let b = mx.cols();
    let (xhat, _) = interpolates(mx, mgz, rng)?;
    let mu2 = rng.uniform(b);

    let x = tape.constant(mx.clone());
    let gz = tape.constant(mgz.clone());
    let real = disc.tape(tape, params, x)?;
    let fake = disc.tape(tape, params, gz)?;
    let critic_real = tape.scale(real.critic_sum, 1.0 / b as f64)?;
    let critic_fake = tape.scale(fake.critic_sum, 1.0 / b as f64)?;

    let xhat = tape.constant(xhat);
    let on_xhat = disc.tape(tape, params, xhat)?;
    let gx = tape.grad_nodes(on_xhat.critic_sum, &[xhat])?[0];
    let p1 = penalty(tape, gx, config.k_prime, b)?;
    let penalty1 = tape.scale(p1, config.lambda1)?;

    let mu = tape.constant(DenseMatrix::row_vector(&mu2)?);
    let mu = tape.repeat_rows(mu, disc.r())?;
    let gap = tape.sub(fake.encoded, real.encoded)?;
    let step = tape.mul(mu, gap)?;
    let yhat = tape.add(real.encoded, step)?;
    let on_yhat = disc.tape_blocks(tape, params, yhat)?;
    let mut f_sum = tape.sum(on_yhat[0].0)?;
    for (f, _) in &on_yhat[1..] {
        let s = tape.sum(*f)?;
        f_sum = tape.add(f_sum, s)?;
    }
    let projections: Vec<NodeId> = on_yhat.iter().map(|(_, yp)| *yp).collect();
    let gy = tape.grad_nodes(f_sum, &projections)?;
    let mut p2 = penalty(tape, gy[0], config.k, b)?;
    for g in &gy[1..] {
        let p = penalty(tape, *g, config.k, b)?;
        p2 = tape.add(p2, p)?;
    }
    let penalty2 = tape.scale(p2, config.lambda2)?;

    let diff = tape.sub(critic_real, critic_fake)?;
    let with_p1 = tape.add(diff, penalty1)?;
    let loss = tape.add(with_p1, penalty2)?;
    Ok(DiscLossNodes {
        loss,
        critic_real,
        critic_fake,
        penalty1,
        penalty2,
    })
}

/// Discriminator loss value and diagnostics for real batch `mx` and
/// generated batch `mgz`.
pub fn swgan_disc_loss(
    disc: &Discriminator,
    mx: &DenseMatrix,
    mgz: &DenseMatrix,
    config: &SwganLossConfig,
    rng: &mut RngStream,
) -> Result<DiscDiagnostics> {
    let mut tape = Tape::new();
    let params = bind_leaves(disc, &mut tape, "disc");
    let nodes = swgan_disc_loss_tape(&mut tape, disc, &params, mx, mgz, config, rng)?;
    nodes.diagnostics(&tape)
}

/// Mean critic value on the generated batch node `gz`.
pub fn swgan_gen_loss_tape(tape: &mut Tape, disc: &Discriminator, params: &[NodeId], gz: NodeId) -> Result<NodeId> {
    let b = tape.value(gz).cols();
    let nodes = disc.tape(tape, params, gz)?;
    tape.scale(nodes.critic_sum, 1.0 / b as f64)
}

/// Generator loss: mean critic value of `G(M_z)`.
pub fn swgan_gen_loss(disc: &Discriminator, generator: &MlpParams, mz: &DenseMatrix) -> Result<f64> {
    let gz = mlp_forward(generator, mz)?;
    if gz.rows() != disc.encoder.input_dim() {
        return Err(shape_err("generator output does not match the critic input"));
    }
    let values = critic_values(disc, &gz)?;
    let loss = values.iter().sum::<f64>() / values.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { term: "generator" });
    }
    Ok(loss)
}

/// Builds the baseline critic loss `mean D(x) − mean D(G z) +
/// λ·mean (‖∇D(x̂)‖ − 1)²` for a scalar-output network `critic`. The
/// returned diagnostics use `penalty1` for the gradient penalty and a zero
/// `penalty2`.
pub fn wgan_gp_loss_tape(
    tape: &mut Tape,
    critic: &MlpParams,
    params: &[NodeId],
    mx: &DenseMatrix,
    mgz: &DenseMatrix,
    lambda: f64,
    rng: &mut RngStream,
) -> Result<DiscLossNodes> {
    if critic.output_dim() != 1 {
        return Err(shape_err("the baseline critic must have a scalar output"));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Precondition(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    check_batches(critic.input_dim(), mx, mgz)?;
    let (xhat, _) = interpolates(mx, mgz, rng)?;
    let x = tape.constant(mx.clone());
    let gz = tape.constant(mgz.clone());
    let dx = critic.tape(tape, params, x)?;
    let dgz = critic.tape(tape, params, gz)?;
    let critic_real = tape.mean(dx)?;
    let critic_fake = tape.mean(dgz)?;

    let xhat = tape.constant(xhat);
    let dhat = critic.tape(tape, params, xhat)?;
    let s = tape.sum(dhat)?;
    let g = tape.grad_nodes(s, &[xhat])?[0];
    let gt = tape.transpose(g)?;
    let norms = tape.row_norms(gt)?;
    let dev = tape.affine(norms, 1.0, -1.0)?;
    let sq = tape.square(dev)?;
    let m = tape.mean(sq)?;
    let penalty1 = tape.scale(m, lambda)?;
    let penalty2 = tape.constant(DenseMatrix::scalar(0.0));

    let diff = tape.sub(critic_real, critic_fake)?;
    let loss = tape.add(diff, penalty1)?;
    Ok(DiscLossNodes {
        loss,
        critic_real,
        critic_fake,
        penalty1,
        penalty2,
    })
}

/// Baseline critic loss value.
pub fn wgan_gp_loss(
    critic: &MlpParams,
    mx: &DenseMatrix,
    mgz: &DenseMatrix,
    lambda: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let mut tape = Tape::new();
    let params = bind_leaves(critic, &mut tape, "critic");
    let nodes = wgan_gp_loss_tape(&mut tape, critic, &params, mx, mgz, lambda, rng)?;
    Ok(nodes.diagnostics(&tape)?.loss)
}
