//! File formats, experiment harness and reporting for gradient-perturbed
//! private ERM built on [`gradpert_core`].

pub mod config;
mod error;
pub mod formats;
pub mod harness;
pub mod report;
pub mod scaling;

pub use error::{Error, Result};
pub use gradpert_core as core;
