//! Coincidence counting over time-ordered tag streams.
//!
//! Delay histograms use half-open bins `[k·w, (k+1)·w)` with zero delay on a bin
//! edge. A histogram with maximum delay `M` counts every pair with `|Δt| ≤ M` and has
//! `floor(M/w) + 1` bins per side; outer bins only partly inside `[-M, M]` carry an
//! exposure below one. Raw counts are never modified: corrections and
//! normalization are kept as a per-bin floor and a common scale.

mod count;
mod fourfold;
pub mod oracle;

pub use count::{
    cross_correlation, cross_correlation_chunked, heralded_counts, heralded_counts_offset,
    CrossCorrelator,
};
pub use fourfold::{fourfold_count, fourfold_rate, FourfoldCounter};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tags::Channel;
use crate::PS_PER_SECOND;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Normalization {
    #[default]
    Raw,
    /// Largest value scaled to one.
    MaxNormalized,
    /// Mean of the far-delay bins scaled to one.
    BaselineNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Corrections {
    pub accidentals_subtracted: bool,
    pub dark_counts_subtracted: bool,
}

/// Two-channel delay histogram of `t_b - t_a`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationHistogram {
    pub channel_a: Channel,
    pub channel_b: Channel,
    pub bin_width_ps: u64,
    pub max_delay_ps: u64,
    pub counts: Vec<u64>,
    /// Tag counts of channels a and b.
    pub singles: [u64; 2],
    pub live_time: f64,
    pub normalization: Normalization,
    pub corrections: Corrections,
    /// Subtracted from each raw count before scaling.
    pub floor: Vec<f64>,
    pub scale: f64,
}

/// Fraction of bins on each side used for the far-delay baseline.
pub const BASELINE_FRACTION: f64 = 0.1;

impl CorrelationHistogram {
    pub fn new(
        channel_a: Channel,
        channel_b: Channel,
        bin_width_ps: u64,
        max_delay_ps: u64,
    ) -> Result<Self> {
        if bin_width_ps == 0 {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if max_delay_ps < bin_width_ps {
            return Err(Error::invalid("max_delay", "must be at least one bin width"));
        }
        let n = 2 * bins_per_side(bin_width_ps, max_delay_ps) as usize;
        Ok(CorrelationHistogram {
            channel_a,
            channel_b,
            bin_width_ps,
            max_delay_ps,
            counts: vec![0; n],
            singles: [0; 2],
            live_time: 0.0,
            normalization: Normalization::Raw,
            corrections: Corrections::default(),
            floor: vec![0.0; n],
            scale: 1.0,
        })
    }

    pub fn bins_per_side(&self) -> u64 {
        bins_per_side(self.bin_width_ps, self.max_delay_ps)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width_ps as f64 / PS_PER_SECOND
    }

    /// Left edge of bin `j`, ps.
    pub fn bin_left_ps(&self, j: usize) -> i64 {
        (j as i64 - self.bins_per_side() as i64) * self.bin_width_ps as i64
    }

    /// Bin centre, seconds.
    pub fn bin_center(&self, j: usize) -> f64 {
        (self.bin_left_ps(j) as f64 + 0.5 * self.bin_width_ps as f64) / PS_PER_SECOND
    }

    /// Covered delay range `[min, max)`, seconds.
    pub fn delay_range(&self) -> (f64, f64) {
        let k = self.bins_per_side() as f64 * self.bin_width();
        (-k, k)
    }

    /// Fraction of bin `j` inside `[-max_delay, max_delay]`.
    pub fn exposure(&self, j: usize) -> f64 {
        let left = self.bin_left_ps(j);
        let right = left + self.bin_width_ps as i64 - 1;
        let m = self.max_delay_ps as i64;
        let n = (right.min(m) - left.max(-m) + 1).max(0);
        n as f64 / self.bin_width_ps as f64
    }

    pub fn value(&self, j: usize) -> f64 {
        let e = self.exposure(j);
        if e <= 0.0 {
            return 0.0;
        }
        (self.counts[j] as f64 - self.floor[j]) * self.scale / e
    }

    /// Poisson error of [`Self::value`].
    pub fn error(&self, j: usize) -> f64 {
        let e = self.exposure(j);
        if e <= 0.0 {
            return 0.0;
        }
        math::sqrt(self.counts[j] as f64) * self.scale / e
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.value(j)).collect()
    }

    pub fn errors(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.error(j)).collect()
    }

    pub fn singles_rates(&self) -> (f64, f64) {
        if self.live_time > 0.0 {
            (
                self.singles[0] as f64 / self.live_time,
                self.singles[1] as f64 / self.live_time,
            )
        } else {
            (0.0, 0.0)
        }
    }

    /// Indices of full-exposure far-delay bins on both sides.
    pub fn baseline_bins(&self) -> Vec<usize> {
        let full: Vec<usize> = (0..self.len()).filter(|&j| self.exposure(j) >= 1.0).collect();
        if full.is_empty() {
            return full;
        }
        let per_side = (math::round(BASELINE_FRACTION * full.len() as f64 / 2.0) as usize).max(1);
        let per_side = per_side.min(full.len() / 2).max(1);
        let mut out: Vec<usize> = full[..per_side].to_vec();
        out.extend_from_slice(&full[full.len() - per_side..]);
        out.dedup();
        out
    }

    /// Adds the counts of a histogram with identical layout.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps
            || other.max_delay_ps != self.max_delay_ps
            || other.channel_a != self.channel_a
            || other.channel_b != self.channel_b
        {
            return Err(Error::invalid("histogram", "layouts differ"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Raw counts only, floor and scale reset.
    pub fn raw(&self) -> CorrelationHistogram {
        let mut h = self.clone();
        h.normalization = Normalization::Raw;
        h.corrections = Corrections::default();
        h.floor = vec![0.0; h.len()];
        h.scale = 1.0;
        h
    }
}

pub(crate) fn bins_per_side(bin_width_ps: u64, max_delay_ps: u64) -> u64 {
    max_delay_ps / bin_width_ps + 1
}

/// Normalization target for [`correct_and_normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NormalizeMode {
    Max,
    Baseline,
}

/// Optionally subtracts the flat accidental floor and the coincidences involving
/// dark counts, then rescales.
///
/// With singles rates `r` and dark rates `d`, photon accidentals contribute
/// `(r_a - d_a)(r_b - d_b)·w·T` per full bin and dark counts the remainder up to
/// `r_a·r_b·w·T`. The dark part is removed whenever a dark rate is non-zero.
pub fn correct_and_normalize(
    hist: &CorrelationHistogram,
    mode: NormalizeMode,
    subtract_accidentals: bool,
    dark_rates: (f64, f64),
) -> Result<CorrelationHistogram> {
    let mut h = hist.raw();
    let subtract_darks = dark_rates.0 > 0.0 || dark_rates.1 > 0.0;
    if subtract_accidentals || subtract_darks {
        if !(h.live_time > 0.0) {
            return Err(Error::InsufficientData("histogram has no live time".into()));
        }
        let (ra, rb) = h.singles_rates();
        let (da, db) = dark_rates;
        if da < 0.0 || db < 0.0 || da > ra || db > rb {
            return Err(Error::invalid("dark_rates", "must lie in [0, singles rate]"));
        }
        let photon = (ra - da) * (rb - db);
        let dark = ra * rb - photon;
        let mut per_full_bin = 0.0;
        if subtract_accidentals {
            per_full_bin += photon;
        }
        if subtract_darks {
            per_full_bin += dark;
        }
        per_full_bin *= h.bin_width() * h.live_time;
        for j in 0..h.len() {
            h.floor[j] = per_full_bin * h.exposure(j);
        }
        h.corrections = Corrections {
            accidentals_subtracted: subtract_accidentals,
            dark_counts_subtracted: subtract_darks,
        };
        if (0..h.len()).all(|j| h.exposure(j) <= 0.0 || h.value(j) <= 0.0) {
            return Err(Error::NegativeBaseline);
        }
    }
    match mode {
        NormalizeMode::Max => {
            let max = (0..h.len())
                .filter(|&j| h.exposure(j) > 0.0)
                .map(|j| h.value(j))
                .fold(f64::NEG_INFINITY, f64::max);
            if !(max > 0.0) {
                return Err(Error::InsufficientData("histogram has no positive bin".into()));
            }
            h.scale = 1.0 / max;
            h.normalization = Normalization::MaxNormalized;
        }
        NormalizeMode::Baseline => {
            let bins = h.baseline_bins();
            if bins.is_empty() {
                return Err(Error::InsufficientData("no full-width bins".into()));
            }
            let base = bins.iter().map(|&j| h.value(j)).sum::<f64>() / bins.len() as f64;
            if !(base > 0.0) {
                return Err(Error::NonPositiveBaseline);
            }
            h.scale = 1.0 / base;
            h.normalization = Normalization::BaselineNormalized;
        }
    }
    Ok(h)
}

/// Herald-conditioned coincidence counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoincidenceCounts {
    pub c_h: u64,
    pub cc_ha: u64,
    pub cc_hb: u64,
    pub cc_hab: u64,
    /// Seconds.
    pub window: f64,
    pub live_time: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let h = CorrelationHistogram::new(Channel(0), Channel(1), 10, 50).unwrap();
        assert_eq!(h.bins_per_side(), 6);
        assert_eq!(h.len(), 12);
        assert_eq!(h.bin_left_ps(6), 0);
        assert_eq!(h.bin_left_ps(0), -60);
        assert_eq!(h.exposure(0), 0.0);
        assert_eq!(h.exposure(1), 1.0);
        assert!((h.exposure(11) - 0.1).abs() < 1e-15);
        let h = CorrelationHistogram::new(Channel(0), Channel(1), 10, 55).unwrap();
        assert!((h.exposure(0) - 0.5).abs() < 1e-15);
        assert!((h.exposure(11) - 0.6).abs() < 1e-15);
        assert!(CorrelationHistogram::new(Channel(0), Channel(1), 10, 5).is_err());
    }

    fn flat(count: u64) -> CorrelationHistogram {
        let mut h = CorrelationHistogram::new(Channel(0), Channel(1), 1000, 99_500).unwrap();
        for c in h.counts.iter_mut() {
            *c = count;
        }
        h
    }

    #[test]
    fn baseline_of_flat_histogram_is_one() {
        let h = correct_and_normalize(&flat(400), NormalizeMode::Baseline, false, (0.0, 0.0)).unwrap();
        for j in 0..h.len() {
            if h.exposure(j) >= 1.0 {
                assert!((h.value(j) - 1.0).abs() < 1e-12);
                assert!((h.error(j) - 0.05).abs() < 1e-12);
            }
        }
        assert_eq!(h.total(), 400 * h.len() as u64);
    }

    #[test]
    fn exact_accidentals_vanish() {
        let mut h = flat(0);
        // r_a r_b w T = 1e5 * 2e4 * 1e-9 * 100 = 200 per full bin.
        h.singles = [10_000_000, 2_000_000];
        h.live_time = 100.0;
        for j in 0..h.len() {
            h.counts[j] = math::round(200.0 * h.exposure(j)) as u64;
        }
        h.counts[100] += 50;
        let c = correct_and_normalize(&h, NormalizeMode::Max, true, (0.0, 0.0)).unwrap();
        assert!((c.value(100) - 1.0).abs() < 1e-12);
        assert!(c.value(10).abs() < 1e-12);
        assert!(c.corrections.accidentals_subtracted);
        assert!(!c.corrections.dark_counts_subtracted);
    }

    #[test]
    fn overestimated_floor_is_an_error() {
        let mut h = flat(10);
        h.singles = [10_000_000, 2_000_000];
        h.live_time = 100.0;
        assert_eq!(
            correct_and_normalize(&h, NormalizeMode::Max, true, (0.0, 0.0)),
            Err(Error::NegativeBaseline)
        );
    }

    #[test]
    fn dark_part_of_floor() {
        let mut h = flat(0);
        h.singles = [10_000_000, 2_000_000];
        h.live_time = 100.0;
        for c in h.counts.iter_mut() {
            *c = 300;
        }
        let dark = (1e5 * 2e4 - 99_500.0 * 19_500.0) * 1e-9 * 100.0;
        let c = correct_and_normalize(&h, NormalizeMode::Baseline, false, (500.0, 500.0)).unwrap();
        assert!((c.floor[50] - dark).abs() < 1e-9);
        assert!((c.value(50) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renormalization_keeps_raw_counts() {
        let h = flat(7);
        let a = correct_and_normalize(&h, NormalizeMode::Max, false, (0.0, 0.0)).unwrap();
        let b = correct_and_normalize(&a, NormalizeMode::Baseline, false, (0.0, 0.0)).unwrap();
        assert_eq!(a.counts, h.counts);
        assert_eq!(b.counts, h.counts);
    }
}
