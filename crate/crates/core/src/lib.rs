//! Core numerics for differentially private empirical risk minimization by
//! gradient perturbation.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit seed; file formats, the experiment
//! harness and the CLI live in the `gradpert` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod curvature;
pub mod data;
mod error;
pub mod linalg;
mod math;
pub mod models;
pub mod optim;
pub mod privacy;
pub mod seed;

pub use error::{Error, Result};
