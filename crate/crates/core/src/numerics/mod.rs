//! Dense matrices, small dense linear algebra, sorting and deterministic
//! random streams.

mod linalg;
mod matrix;
mod rng;
mod sort;

pub use linalg::{qr_decompose, singular_values, sqrtm_psd, sym_eig_small, PIVOT_TOL};
pub use matrix::DenseMatrix;
pub use rng::{Distribution, RngStream, RNG_ALGORITHM};
pub use sort::sort_with_ranks;
