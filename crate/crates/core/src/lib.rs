//! Bayesian neighborhood adaptation for graph neural networks.
//!
//! A beta-process prior over message-passing hops is inferred jointly with
//! the network weights by maximizing a Monte-Carlo evidence lower bound. Each
//! hop `l` gets a contribution probability `π_l = ν_1 ⋯ ν_l` (stick breaking)
//! and each hidden feature of layer `l` is kept by a relaxed Bernoulli mask
//! drawn with that probability; the deepest layer with an active feature is
//! the neighborhood scope and decides how many layers run.
//!
//! Modules:
//! - [`tensor`]: dense matrices, sparse propagation, reverse-mode tape, Adam.
//! - [`graph`]: dataset IO, normalized adjacency, dropedge, synthetic graphs.
//! - [`process`]: stick breaking, Kumaraswamy posterior, concrete masks, KL terms.
//! - [`model`]: masked residual GNN, scope extraction, prediction, checkpoints.
//! - [`train`]: ELBO step, training loop with early stopping, sweeps.
//! - [`metrics`]: accuracy, ECE, predictive entropy, PAvsPU.
//! - [`theory`]: linearized-propagation checks of the oversmoothing inequalities.
//! - [`cli`]: the `bna` command-line tool.

pub mod cli;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod process;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
