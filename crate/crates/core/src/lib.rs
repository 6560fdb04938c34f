//! Hilbert foundation policies on small deterministic MDPs.
//!
//! The pipeline learns a tabular embedding `phi` whose Euclidean distances
//! match shortest step counts, trains one dataset-constrained skill per
//! latent direction `z` with the reward `<phi(s') - phi(s), z>`, and reuses
//! those skills without further training for reward-specified tasks, goal
//! reaching (with optional midpoint planning) and hierarchical control.
//! Exact oracles (breadth-first search, value iteration) check every
//! learned quantity.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod mdp;
pub mod oracle;
pub mod prompting;
pub mod report;
pub mod repr;
pub mod skills;
pub mod theory;

pub use error::{Error, Result};
