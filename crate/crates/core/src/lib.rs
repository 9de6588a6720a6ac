//! Explains the coordinates of a manifold embedding as sparse nonlinear
//! functions of a user-supplied dictionary.
//!
//! The pipeline builds a radius neighborhood graph and its renormalized
//! Laplacian, computes (or accepts) an embedding, estimates tangent frames by
//! weighted local PCA, pulls the embedding differentials back to those
//! frames through the estimated pushforward metric, and then selects the
//! dictionary functions whose gradients explain them with a group lasso.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dictionary;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod flasso;
pub mod graph;
pub mod io;
pub mod pipeline;
pub mod pullback;
pub mod sparse;
pub mod synth;
pub mod tangent;

pub use error::{Error, ErrorKind, Result};
pub use exec::Parallelism;
