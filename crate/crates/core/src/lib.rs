//! Multi-objective Bayesian optimization driven by an interactively learned
//! model of the decision maker's preferences.
//!
//! The objectives are modelled by independent Gaussian processes
//! ([`kernelgp`]); the decision maker's utility is either a Chebyshev
//! scalarization with an uncertain weight vector ([`utility`], [`prefmodel`])
//! or a monotone preferential Gaussian process ([`pgpm`]). Evaluation points
//! are chosen by an expected-improvement criterion that averages over both
//! sources of uncertainty ([`acquisition`]), and preference queries are chosen
//! by mutual information ([`active`]).
//!
//! [`engine`] ties the pieces into a resumable interactive state machine that
//! is shared by the batch experiment runner in [`harness`] and by the HTTP
//! service crate.

// `!(x > 0.0)` is used throughout to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod active;
pub mod benchmarks;
pub mod diag;
pub mod dmsim;
pub mod engine;
mod error;
pub mod harness;
pub mod kernelgp;
pub mod pgpm;
pub mod prefmodel;
pub mod stats;
pub mod utility;

pub use error::{Error, Result};
