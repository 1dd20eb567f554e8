//! Poisson–Dirichlet PD(θ) toolkit: GEM sampling, exact laws of the ranked
//! frequencies, large-deviation rate functions, selection tilting and a
//! verification harness for the large-θ limit theorems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod exact_laws;
pub mod format;
pub mod quadrature;
pub mod rates;
pub mod sampling;
pub mod selection;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
