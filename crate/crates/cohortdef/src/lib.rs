//! File formats, synthetic cohorts, end-to-end runs, the command line and
//! the local HTTP service around [`cohortdef_core`].

pub mod cli;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod service;
pub mod synth;

pub use cohortdef_core as core;
pub use error::{Category, Error, Result};
