//! Seeded Monte Carlo generation of photon-pair time-tag streams.
//!
//! Pair emission is a doubly stochastic Poisson process whose intensity follows the
//! squared modulus of a complex Gaussian field with amplitude decay rate
//! `(γ_s + γ_i)/2`. Each pair carries a signal-idler delay drawn from the two-sided
//! exponential cross-correlation shape. Optical losses, beam splitters, detectors and
//! a measurement shutter act on the resulting tag streams.
//!
//! Time is cut into fixed segments of [`SEGMENT_SECONDS`]. Every segment draws from
//! its own random streams, which makes the output independent of how segments are
//! scheduled. The field is restarted from its stationary law at each segment start,
//! so correlations spanning a boundary (a few coherence times out of a second) are
//! not reproduced.

mod detector;
mod optics;
mod pipeline;
mod source;

pub use detector::{apply_detector, DeadTimeFilter};
pub use optics::{apply_loss, apply_shutter, apply_splitter, ShutterParams};
pub use pipeline::{RunStats, Scenario, SegmentOutput, StreamAssembler, Topology, TopologyElement};
pub use source::{generate_pair_stream, pair_delay_fwhm, FieldProcess, SourceEngine, SourceStats};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Length of one independently seeded generation segment.
pub const SEGMENT_SECONDS: f64 = 1.0;

/// Default thinning bound on the normalized intensity. Intensities above it are
/// clipped; for the exponential intensity law this drops a fraction
/// `(B + 1) e^{-B}` ≈ 1e-5 of the pairs and biases the bunching peak by
/// `(B² + 2B + 2) e^{-B} / 2` ≈ 1e-4.
pub const DEFAULT_INTENSITY_BOUND: f64 = 14.0;

/// `2 sqrt(2 ln 2)`: Gaussian FWHM over standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// One longitudinal mode of a multi-mode source.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceMode {
    pub relative_weight: f64,
    /// Recorded for reference; intensity-level modes do not beat with each other.
    #[cfg_attr(feature = "serde", serde(default))]
    pub frequency_offset: f64,
}

/// Photon-pair source parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceParams {
    /// Pair generation rate at the source, Hz.
    pub pair_rate: f64,
    /// Signal field decay rate, 1/s.
    pub gamma_s: f64,
    /// Idler field decay rate, 1/s.
    pub gamma_i: f64,
    #[cfg_attr(feature = "serde", serde(default = "single_mode"))]
    pub modes: Vec<SourceMode>,
    #[cfg_attr(feature = "serde", serde(default = "default_bound"))]
    pub intensity_bound: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub engine: SourceEngine,
}

fn single_mode() -> Vec<SourceMode> {
    vec![SourceMode {
        relative_weight: 1.0,
        frequency_offset: 0.0,
    }]
}

#[cfg(feature = "serde")]
fn default_bound() -> f64 {
    DEFAULT_INTENSITY_BOUND
}

impl SourceParams {
    pub fn single_mode(pair_rate: f64, gamma_s: f64, gamma_i: f64) -> Self {
        SourceParams {
            pair_rate,
            gamma_s,
            gamma_i,
            modes: single_mode(),
            intensity_bound: DEFAULT_INTENSITY_BOUND,
            engine: SourceEngine::Cox,
        }
    }

    pub fn with_engine(mut self, engine: SourceEngine) -> Self {
        self.engine = engine;
        self
    }

    /// Decay rates whose cross-correlation FWHM `ln2/(2γ_s) + ln2/(2γ_i)` equals
    /// `fwhm`, with `γ_s = asymmetry · γ_i`.
    pub fn from_cross_fwhm(pair_rate: f64, fwhm: f64, asymmetry: f64) -> Self {
        let gamma_i = core::f64::consts::LN_2 * (1.0 + 1.0 / asymmetry) / (2.0 * fwhm);
        Self::single_mode(pair_rate, asymmetry * gamma_i, gamma_i)
    }

    /// Decay rates reproducing both a cross-correlation FWHM and an
    /// auto-correlation FWHM, with the faster decay on the signal.
    pub fn from_widths(pair_rate: f64, cross_fwhm: f64, auto_fwhm: f64) -> Result<Self> {
        let (gs, gi) = crate::fit::rates_from_widths(cross_fwhm, auto_fwhm).ok_or_else(|| {
            Error::invalid("auto_fwhm", "no decay rates reproduce this pair of widths")
        })?;
        Ok(Self::single_mode(pair_rate, gs, gi))
    }

    /// `n` equal-weight modes sharing the total pair rate.
    pub fn with_equal_modes(mut self, n: usize) -> Self {
        self.modes = (0..n)
            .map(|k| SourceMode {
                relative_weight: 1.0,
                frequency_offset: k as f64,
            })
            .collect();
        self
    }

    /// Amplitude decay rate of the intensity field, `(γ_s + γ_i)/2`.
    pub fn field_decay_rate(&self) -> f64 {
        0.5 * (self.gamma_s + self.gamma_i)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate >= 0.0 && self.pair_rate.is_finite()) {
            return Err(Error::invalid("pair_rate", "must be finite and >= 0"));
        }
        // Delays must stay far below half a segment for segment stitching.
        let min_gamma = 120.0 / SEGMENT_SECONDS;
        for (name, g) in [("gamma_s", self.gamma_s), ("gamma_i", self.gamma_i)] {
            if !(g.is_finite() && g >= min_gamma) {
                return Err(Error::invalid(name, "decay rates must be finite and >= 120 /s"));
            }
        }
        if self.modes.is_empty() {
            return Err(Error::invalid("modes", "at least one mode required"));
        }
        if self
            .modes
            .iter()
            .any(|m| !(m.relative_weight > 0.0 && m.relative_weight.is_finite()))
        {
            return Err(Error::invalid("modes", "weights must be positive"));
        }
        if !(self.intensity_bound >= 4.0 && self.intensity_bound.is_finite()) {
            return Err(Error::invalid("intensity_bound", "must be >= 4"));
        }
        if self.engine == SourceEngine::PairCluster {
            let total: f64 = self.modes.iter().map(|m| m.relative_weight).sum();
            let gamma = self.field_decay_rate();
            for m in &self.modes {
                let rate = self.pair_rate * m.relative_weight / total;
                if rate * source::BUNCHING_AREA / gamma > 1.0 {
                    return Err(Error::invalid(
                        "engine",
                        "pair-cluster needs pair_rate per mode below 0.4 (gamma_s + gamma_i)/2",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Single-photon detector model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Gaussian timing jitter FWHM, seconds.
    #[cfg_attr(feature = "serde", serde(default))]
    pub jitter_fwhm: f64,
    /// Hz.
    #[cfg_attr(feature = "serde", serde(default))]
    pub dark_rate: f64,
    /// Seconds.
    #[cfg_attr(feature = "serde", serde(default))]
    pub dead_time: f64,
}

impl DetectorParams {
    pub const IDEAL: DetectorParams = DetectorParams {
        efficiency: 1.0,
        jitter_fwhm: 0.0,
        dark_rate: 0.0,
        dead_time: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
        }
        if !(self.jitter_fwhm >= 0.0 && self.jitter_fwhm < 1e-3) {
            return Err(Error::invalid("jitter_fwhm", "must lie in [0, 1 ms)"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::invalid("dark_rate", "must be >= 0"));
        }
        if !(self.dead_time >= 0.0 && self.dead_time.is_finite()) {
            return Err(Error::invalid("dead_time", "must be >= 0"));
        }
        Ok(())
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_fwhm / FWHM_PER_SIGMA
    }
}
