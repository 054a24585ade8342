//! Files, formats, study harnesses and the command-line front end for
//! Bayesian Dirichlet ARMA models. The numerics live in `bdarma-core`.

pub mod application;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod panel;
pub mod report;
pub mod study;
pub mod svg;

pub use error::{Error, Result};
