//! Variational toolkit for the one-dimensional N-body fixed-ends problem.
//!
//! The crate minimizes the Lagrangian action between two collinear
//! configurations, analyses the collisions of the minimizer, solves and
//! certifies collinear central configurations, performs the relabeling and
//! plateau path constructions used to compare actions, and integrates the
//! equations of motion as an independent check.

// `!(x > 0.0)` style tests are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod central_config;
pub mod collision;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod minimize;
pub mod model;
pub mod surgery;

pub use error::{Error, Result};
