//! Command-line front end of the multilevel Monte Carlo engine.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{Mode, OutputFormat, Overrides, RunConfig};
pub use error::CliError;
