//! Sliced Wasserstein building blocks.
//!
//! The crate is `no_std` (with `alloc`) unless the default `std` feature is
//! enabled. It contains dense linear algebra and deterministic sampling
//! ([`numerics`]), a reverse-mode differentiation tape that can differentiate
//! its own gradients ([`gradtape`]), one-dimensional transport and the primal
//! sliced Wasserstein block ([`sliced_ot`]), the dual block and adversarial
//! losses ([`dual_swd`]), Stiefel-manifold optimizers ([`stiefel`]), toy-scale
//! networks with their training steps ([`models`]) and evaluation helpers
//! ([`evaldata`]).
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dual_swd;
pub mod error;
pub mod evaldata;
pub mod gradtape;
pub mod models;
pub mod numerics;
pub mod sliced_ot;
pub mod stiefel;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, RngStream};
