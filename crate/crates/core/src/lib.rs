//! Exact small-cluster spin dynamics for dipolar magic-echo experiments, and a
//! memory-kernel model for the inverse spin temperature.

// `!(x > 0.0)` is used on purpose so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod operators;
pub mod pulseprog;
pub mod table;
pub mod thermo;
pub mod verify;

pub use error::{Error, Result};
