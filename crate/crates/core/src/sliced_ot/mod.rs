//! One-dimensional optimal transport, the primal sliced Wasserstein block,
//! iterative distribution transfer and Monte-Carlo sliced distances.
//!
//! Histogram bins are `l` equal cells on `[0, 1]` with centers
//! `(j + 0.5)/l`. The soft assignment of a value to a bin uses a Gaussian
//! kernel whose distance is measured in bin widths, so the softness `α`
//! does not need retuning when `l` changes.

mod dkw;
mod histogram;
mod primal;
mod transport;

pub use dkw::{dkw_bound, dkw_check, dkw_floor, dkw_violation_frequency, Deviation};
pub use histogram::{
    bin_centers, cdf_eval, cdf_from_pdf, cdf_inverse, rescale_unit, soft_assignments, soft_histogram, PiecewiseCdf,
    Rescaled, SoftHistogram, DEGENERATE_RANGE, DOMAIN_SLACK,
};
pub use primal::{primal_block_forward, PrimalBlockParams, RescaleGrad, TransportMap1D};
pub use transport::{exact_transport_1d, idt_transfer, mc_swd, mc_swd_with, wasserstein_1d_exact, ProjectionSet};
