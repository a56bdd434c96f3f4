//! Distributed regularized regression over communication-constrained
//! networks.
//!
//! The crate provides a centralized inexact Prox-SVRG solver, its
//! distributed counterpart exchanging subtractively dithered, fixed-length
//! quantized messages over a simulated synchronous network, exact bit
//! accounting, and the convergence constants and envelopes used to check the
//! linear rate.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod central;
pub mod distributed;
mod error;
pub mod exec;
pub mod harness;
pub mod problem;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
pub use exec::Execution;
