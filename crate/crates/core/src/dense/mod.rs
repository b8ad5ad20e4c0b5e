//! Dense linear algebra, activations, seeded randomness and the
//! finite-difference checker used by the numeric tests.

mod activation;
mod gradcheck;
mod matrix;
mod rng;

pub use activation::{l2_row_normalize, l2_row_normalize_backward, Activation};
pub use gradcheck::fd_gradient_check;
pub use matrix::{axpy, dot, norm2, Matrix};
pub use rng::{derive_seed, RngState};
