//! Selection-aware Bayesian inference after a two-stage ℓ1 selection pipeline.
//!
//! The crate is organised bottom-up:
//!
//! - [`selection`]: first-stage LASSO screen, randomized second-stage LASSO and
//!   the KKT state the conditioning step needs.
//! - [`geometry`]: polyhedral description of the selection event and the
//!   affine objects (`Q`, `P`, `o`, `Σ`) that define the working posterior.
//! - [`posterior`]: barrier penalty, inner optimizer `w*`, reparameterization
//!   map and the log-posterior with its gradient.
//! - [`sampler`]: MALA, credible intervals and the naive / split baselines.
//! - [`simulation`]: synthetic coverage and power experiments.
//! - [`features`]: GSVA pathway scores and density PCA on the square-root
//!   sphere.
//! - [`cli`]: configuration, CSV/JSON I/O and the subcommands behind the
//!   `selbayes` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod features;
pub mod geometry;
pub mod linalg;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod selection;
pub mod simulation;

pub use error::{Error, Result};
