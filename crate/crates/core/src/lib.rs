//! Solvers for robust Markov decision processes.
//!
//! The library is organized around a double-loop scheme: an outer policy
//! mirror descent and an inner adversarial search for the worst-case
//! transition kernel, certified per iteration. It ships with:
//!
//! - exact tabular MDP computations ([`mdp`]);
//! - L1 rectangular ambiguity sets with greedy worst-case responses and
//!   constrained proximal steps ([`ambiguity`]);
//! - inner solvers: transition mirror ascent and robust value iteration
//!   ([`inner`]);
//! - the outer robust policy mirror descent loop ([`drpmd`]);
//! - parametric transition kernels (entropy-tilted and Gaussian-mixture)
//!   with exact and sampled gradients ([`param`], [`monte_carlo`]);
//! - benchmark environments ([`envs`]) and model (de)serialization
//!   ([`model_io`]);
//! - finite-difference and identity checkers used by the validation
//!   suites ([`validate`]) and a small dense LP solver as an independent
//!   oracle ([`lp`]).

pub mod ambiguity;
pub mod drpmd;
pub mod envs;
pub mod error;
pub mod inner;
pub mod lp;
pub mod mdp;
pub mod model_io;
pub mod monte_carlo;
pub mod param;
pub mod validate;

pub use error::{Result, RmdpError};
