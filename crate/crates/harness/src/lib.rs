//! Command-line harness around `spnet-core`: map I/O, synthetic data, toy
//! training, gradient checking, ablation sweeps and (attribute-grouped)
//! dataset evaluation.

pub mod ablate;
pub mod attributes;
pub mod augment;
pub mod config;
pub mod data;
pub mod eval;
pub mod forward;
pub mod gradcheck;
pub mod io;
pub mod synth;
pub mod train;

mod error;

pub use error::{HarnessError, Result};
