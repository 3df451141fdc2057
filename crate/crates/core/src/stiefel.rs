//! Optimization on square orthogonal matrices plus plain Adam.
//!
//! A Stiefel step projects the Euclidean gradient onto the tangent space,
//! runs it through Adam in the ambient space and retracts the result back
//! onto the manifold with a sign-corrected QR factorization. Moments are
//! reused across steps without transport.

use alloc::format;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{qr_decompose, DenseMatrix, RngStream};

/// Largest tolerated `‖OᵀO − I‖_F` for a stored orthogonal matrix.
pub const ORTHO_TOL: f64 = 1e-6;
/// Drift beyond this after a step triggers one more QR pass.
const REORTHO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix(DenseMatrix);

impl OrthogonalMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if !values.is_square() {
            return Err(shape_err("orthogonal matrix must be square"));
        }
        let defect = values.orthogonality_defect();
        if defect > ORTHO_TOL {
            return Err(Error::Precondition(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(Self(values))
    }

    pub fn identity(r: usize) -> Self {
        Self(DenseMatrix::identity(r))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }

    pub fn defect(&self) -> f64 {
        self.0.orthogonality_defect()
    }
}

/// Which tangent projection [`tangent_project`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TangentRule {
    /// `(G − O·Gᵀ·O) / 2`.
    #[default]
    Reflected,
    /// `G − O·(OᵀG + GᵀO) / 2`.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: DenseMatrix,
    pub second_moment: DenseMatrix,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: DenseMatrix::zeros(rows, cols),
            second_moment: DenseMatrix::zeros(rows, cols),
            step: 0,
            config,
        }
    }

    pub fn for_param(param: &DenseMatrix, config: AdamConfig) -> Self {
        Self::new(param.rows(), param.cols(), config)
    }

    /// Advances the moments with `grad` and returns the update to subtract.
    fn update(&mut self, grad: &DenseMatrix) -> Result<DenseMatrix> {
        if grad.shape() != self.first_moment.shape() {
            return Err(shape_err(format!(
                "gradient {}x{} does not match optimizer state {}x{}",
                grad.rows(),
                grad.cols(),
                self.first_moment.rows(),
                self.first_moment.cols()
            )));
        }
        if !grad.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        let m = self.first_moment.as_mut_slice();
        let v = self.second_moment.as_mut_slice();
        let mut delta = DenseMatrix::zeros(grad.rows(), grad.cols());
        for (((d, g), m), v) in delta.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *d = lr * (*m / c1) / (libm::sqrt(*v / c2) + eps);
        }
        Ok(delta)
    }
}

/// QR factor of a standard Gaussian `r×r` matrix.
pub fn orth_init(r: usize, rng: &mut RngStream) -> Result<OrthogonalMatrix> {
    if r == 0 {
        return Err(Error::Precondition("dimension must be positive".into()));
    }
    loop {
        match qr_decompose(&rng.gaussian_matrix(r, r)) {
            Ok((q, _)) => return Ok(OrthogonalMatrix(q)),
            // A singular Gaussian draw has probability zero; draw again.
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

pub fn tangent_project(o: &OrthogonalMatrix, g: &DenseMatrix, rule: TangentRule) -> Result<DenseMatrix> {
    let o = o.as_matrix();
    o.require_same_shape(g)?;
    match rule {
        TangentRule::Reflected => {
            let ogt = o.matmul_t(g)?;
            Ok(g.sub(&ogt.matmul(o)?)?.scale(0.5))
        }
        TangentRule::Symmetric => {
            let otg = o.t_matmul(g)?;
            let sym = otg.add(&otg.transpose())?.scale(0.5);
            g.sub(&o.matmul(&sym)?)
        }
    }
}

pub fn qr_retract(m: &DenseMatrix) -> Result<OrthogonalMatrix> {
    let (mut q, _) = qr_decompose(m)?;
    if q.orthogonality_defect() > REORTHO_TOL {
        q = qr_decompose(&q)?.0;
    }
    Ok(OrthogonalMatrix(q))
}

pub fn adam_step(state: &mut AdamState, param: &mut DenseMatrix, grad: &DenseMatrix) -> Result<()> {
    let delta = state.update(grad)?;
    for (p, d) in param.as_mut_slice().iter_mut().zip(delta.as_slice()) {
        *p -= d;
    }
    Ok(())
}

pub fn stiefel_adam_step(
    state: &mut AdamState,
    o: &mut OrthogonalMatrix,
    grad: &DenseMatrix,
    rule: TangentRule,
) -> Result<()> {
    let tangent = tangent_project(o, grad, rule)?;
    let delta = state.update(&tangent)?;
    if delta.max_abs() == 0.0 {
        return Ok(());
    }
    *o = qr_retract(&o.as_matrix().sub(&delta)?)?;
    Ok(())
}
