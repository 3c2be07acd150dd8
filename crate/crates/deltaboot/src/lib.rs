//! Epistemic uncertainty for small L2-regularized neural classifiers.
//!
//! Two routes to the same quantity, the standard deviation of a class
//! probability under retraining noise, live side by side here:
//!
//! * **bootstrap**: retrain the network on resampled training sets and read
//!   the spread off the ensemble, and
//! * **delta**: train once, model the parameter covariance from per-example
//!   gradient outer products, and push sensitivities through it.
//!
//! The rest of the crate exists to make the two comparable: deterministic
//! training with explicit seed derivation, a matrix-free eigensolver so the
//! delta route scales past toy sizes, regression tooling that quantifies
//! agreement, and file formats for datasets, checkpoints and results.
//!
//! Start with the `examples/` directory; each example exercises one
//! capability end to end.

pub mod bootstrap;
pub mod compare;
pub mod delta;
pub mod error;
pub mod io;
pub mod net;
pub mod run;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
