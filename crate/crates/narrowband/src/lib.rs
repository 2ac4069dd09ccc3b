//! File formats, scenario configuration and the command-line pipeline around
//! [`narrowband_core`].

pub use narrowband_core as core;

pub mod cli;
pub mod config;
pub mod design;
mod error;
pub mod format;
pub mod materials;
pub mod parallel;
pub mod provenance;
pub mod report;

pub use error::{Error, Result};
