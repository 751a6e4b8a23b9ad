//! Multi-species occupancy-detection models for large checklist datasets.
//!
//! The crate provides a sparse detection encoding ([`data`]), the
//! marginalized likelihood and hierarchical prior ([`model`]), three
//! inference engines ([`vi`], [`mcmc`], [`mle`]), a generative simulator
//! with brute-force oracles ([`simulate`]) and evaluation metrics
//! ([`eval`]).

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod mcmc;
pub mod mle;
pub mod model;
pub mod optim;
pub mod real;
pub mod simulate;
pub mod vi;

pub use error::{Error, Result};
