//! File formats, configuration and command-line front end for the
//! nano-drone localization stack.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod outputs;
pub mod pgm;
pub mod plan_text;
pub mod spec_text;
pub mod tables;
pub mod weights;

pub use error::{Error, Result};
