//! Recursive POMDP classification for RSVP typing.
//!
//! * [`nn`]: tensors, layers with explicit backward passes, Adam, gradient
//!   checking, checkpoints.
//! * [`sim`]: beliefs, query sampling, response pools, synthetic data.
//! * [`model`]: the recurrent MarkovType classifier and its rollouts.
//! * [`trainer`]: rewards, the hybrid REINFORCE + supervised loss, training.
//! * [`rb`]: binary classifier plus recursive Bayesian fusion.
//! * [`eval`]: threshold-stopping sessions, sweeps, ITR, reports.

pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod rb;
mod real;
pub mod rng;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};
pub use parallel::Parallelism;
pub use real::Real;
