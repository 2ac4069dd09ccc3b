//! Design math, Monte Carlo generation and correlation analysis for cavity-enhanced
//! photon-pair sources that use an intracavity tuning crystal to isolate a single
//! doubly-resonant mode cluster.
//!
//! The crate is `no_std` (with `alloc`) and free of IO. File formats, configuration
//! and the command line live in the `narrowband` companion crate.
//!
//! Module map:
//!
//! - [`materials`]: phase and group indices of cavity media.
//! - [`cavity`]: free spectral ranges, cluster separation, single-mode conditions,
//!   finesse and the doubly-resonant mode spectrum.
//! - [`sim`]: seeded photon-pair stream generator plus detector, splitter, loss and
//!   shutter models.
//! - [`correlator`]: coincidence histograms, heralded and four-fold counting.
//! - [`fit`] / [`analysis`]: correlation fits, bandwidth, mode number, heralded
//!   g2(0), rates and brightness.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod cavity;
pub mod correlator;
pub mod error;
pub mod fit;
pub mod materials;
pub mod math;
pub mod rng;
pub mod sim;
pub mod tags;

pub use error::{Error, Result};
pub use tags::{Channel, TimeTag, TimeTagStream};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Picoseconds per second.
pub const PS_PER_SECOND: f64 = 1e12;
