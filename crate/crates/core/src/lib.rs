//! Allocation-only numerics for recurrent character models.
//!
//! The crate carries everything that does not touch the operating system:
//! dense linear algebra with an SVD-backed pseudoinverse, a reference LSTM
//! with exact backpropagation through time, the E-LSTM cell whose extra
//! "E-gate" is a closed-form least-squares readout over forget-gate
//! activations, a standalone extreme learning machine, character corpora and
//! the arithmetic behind epoch comparison reports.
//!
//! File formats, wall-clock timing and the command line live in the
//! `elstm-lab` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod elm;
pub mod elstm;
mod error;
pub mod gradcheck;
pub mod linalg;
pub mod lstm;
pub mod model;
pub mod report;
pub mod rng;
pub mod textdata;

pub use error::{Error, Result};
pub use linalg::Matrix;
