//! Structured pruning by linear redundancy elimination.
//!
//! A layer's post-activation units are regressed on one another; units that
//! are well predicted by their neighbours are removed and their outgoing
//! weights folded into the surviving units, so the next layer sees (nearly)
//! the same pre-activations. The [`amc`] module wraps this in an annealed
//! prune / distill loop.

pub mod amc;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod pruner;
pub mod redundancy;
pub mod report;
pub mod tensor;

pub use error::{Error, Result};
pub use nn::{Network, NetworkBuilder};
pub use tensor::{Matrix, Scalar, Tensor};
