//! Finite-speed (v-causal) hidden-influence models: causal geometry, behaviors,
//! polytope bounds by linear programming, quantum see-saw optimization, and an
//! exact simulator for v-causal strategies.

pub mod correlations;
pub mod error;
pub mod polytope;
pub mod quantum;
pub mod spacetime;
pub mod vmodel;

pub use error::{Error, Result};
