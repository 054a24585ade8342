//! Dirichlet ARMA (DARMA) models for compositional time series.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. It contains the numerical pieces only: simplex numerics, the
//! model likelihood and its gradient, shrinkage priors, a multinomial
//! tree-doubling HMC sampler with convergence diagnostics, forward
//! simulation, forecasting and evaluation metrics. File formats, the
//! command-line front end and parallel orchestration live in the `bdarma`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod error;
pub mod forecast;
pub mod ingest;
mod math;
pub mod metrics;
pub mod model;
pub mod posterior;
pub mod prior;
pub mod sampler;
pub mod simplex;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};

/// Version of this crate.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
