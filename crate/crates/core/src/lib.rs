//! Second-order approximate unlearning for small neural and linear models.
//!
//! The crate is organized bottom-up:
//!
//! - [`linalg`]: dense symmetric eigendecomposition, Cholesky, pseudoinverse and
//!   damped inverse application.
//! - [`model`]: datasets, splits, and models exposing loss, gradient, Hessian,
//!   Hessian-vector products and training.
//! - [`unlearn`]: Newton, PINV-Newton, Damped-Newton, CureNewton (cubic
//!   regularized trust-region solve), SCureNewton and first-order baselines.
//! - [`eval`]: accuracy, Jensen-Shannon divergence, update norm and the loss
//!   based membership inference attack.
//! - [`harness`]: batch and sequential unlearning experiments and timing.
//! - [`data`] and [`checkpoint`]: IDX/CSV/synthetic loaders and the binary
//!   parameter checkpoint format.

pub mod checkpoint;
pub mod data;
pub mod eval;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod unlearn;

pub(crate) mod seed;
