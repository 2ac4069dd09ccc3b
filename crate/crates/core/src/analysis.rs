//! Derived quantities: photon bandwidth, effective mode number, heralded g2(0),
//! loss-corrected pair rates, spectral brightness and Monte Carlo fit errors.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_distr::{Distribution, Poisson};

use crate::correlator::{CoincidenceCounts, CorrelationHistogram};
use crate::error::{Error, Result};
use crate::fit::{fit_histogram, Estimate, FitKind, FitResult};
use crate::math;
use crate::rng::{indexed_rng, Stage};

/// Photon bandwidth of a doubly resonant source from its cross-correlation time.
pub fn bandwidth_from_tau(tau_c: f64) -> Result<f64> {
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::invalid("tau_c", "must be positive"));
    }
    Ok(0.64 / (PI * tau_c))
}

/// Bandwidth with its error propagated from the correlation time.
pub fn bandwidth_estimate(tau_c: Estimate) -> Result<Estimate> {
    let b = bandwidth_from_tau(tau_c.value)?;
    Ok(Estimate::new(b, b * tau_c.error / tau_c.value))
}

/// Effective number of modes from the unheralded auto-correlation peak.
pub fn mode_number(g2_peak: f64) -> Result<f64> {
    if !(g2_peak > 1.0 && g2_peak.is_finite()) {
        return Err(Error::OutOfDomain(g2_peak));
    }
    Ok(1.0 / (g2_peak - 1.0))
}

pub fn mode_number_estimate(g2_peak: Estimate) -> Result<Estimate> {
    let n = mode_number(g2_peak.value)?;
    Ok(Estimate::new(n, n * n * g2_peak.error))
}

/// Heralded `g2(0) = 2·C_H·CC_HAB / (CC_HA + CC_HB)²`.
///
/// The error is first order in independent Poisson counts, with the variance of
/// `CC_HAB` floored at one count.
pub fn g2_zero(c: &CoincidenceCounts) -> Result<Estimate> {
    let s = (c.cc_ha + c.cc_hb) as f64;
    if s == 0.0 {
        return Err(Error::DivisionByZero("CC_HA + CC_HB"));
    }
    let h = c.c_h as f64;
    let hab = c.cc_hab as f64;
    let g = 2.0 * h * hab / (s * s);
    let d_h = 2.0 * hab / (s * s);
    let d_hab = 2.0 * h / (s * s);
    let d_s = -2.0 * g / s;
    let var = d_h * d_h * h + d_hab * d_hab * hab.max(1.0) + d_s * d_s * s;
    Ok(Estimate::new(g, math::sqrt(var)))
}

/// Heralded `g2(0)` after removing accidental coincidences measured in windows
/// displaced from the herald (same herald count, window and live time).
pub fn g2_zero_corrected(c: &CoincidenceCounts, accidental: &CoincidenceCounts) -> Result<Estimate> {
    if c.c_h != accidental.c_h || c.window != accidental.window {
        return Err(Error::invalid("accidental", "counts must share herald and window"));
    }
    let s = (c.cc_ha + c.cc_hb) as f64 - (accidental.cc_ha + accidental.cc_hb) as f64;
    if !(s > 0.0) {
        return Err(Error::DivisionByZero("accidental-corrected CC_HA + CC_HB"));
    }
    let h = c.c_h as f64;
    let hab = c.cc_hab as f64 - accidental.cc_hab as f64;
    let g = 2.0 * h * hab / (s * s);
    let d_h = 2.0 * hab / (s * s);
    let d_hab = 2.0 * h / (s * s);
    let d_s = -2.0 * g / s;
    let var_hab = (c.cc_hab + accidental.cc_hab).max(1) as f64;
    let var_s = (c.cc_ha + c.cc_hb + accidental.cc_ha + accidental.cc_hb) as f64;
    let var = d_h * d_h * h + d_hab * d_hab * var_hab + d_s * d_s * var_s;
    Ok(Estimate::new(g, math::sqrt(var)))
}

/// Transmission budget of one arm between source and detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArmEfficiency {
    pub coupling: f64,
    pub detection: f64,
    pub filter_transmission: f64,
}

impl ArmEfficiency {
    pub const UNITY: ArmEfficiency = ArmEfficiency {
        coupling: 1.0,
        detection: 1.0,
        filter_transmission: 1.0,
    };

    pub fn total(&self) -> f64 {
        self.coupling * self.detection * self.filter_transmission
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coupling", self.coupling),
            ("detection", self.detection),
            ("filter_transmission", self.filter_transmission),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(name, "efficiency must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateReport {
    /// Detected two-fold rate, Hz.
    pub coincidence_rate: f64,
    /// Detected signal and idler singles, Hz (zero when not supplied).
    pub singles_rates: [f64; 2],
    /// Loss-corrected pair rate at the source, Hz.
    pub pair_generation_rate: f64,
    /// Pairs per second per mW of pump per MHz of bandwidth.
    pub spectral_brightness: f64,
    pub pump_power: f64,
    pub bandwidth: f64,
    pub signal: ArmEfficiency,
    pub idler: ArmEfficiency,
}

impl RateReport {
    pub fn with_singles(mut self, signal: f64, idler: f64) -> Self {
        self.singles_rates = [signal, idler];
        self
    }
}

/// Pair generation rate corrected for both arms' losses, and spectral brightness.
/// `pump_power` in mW, `bandwidth` in Hz.
pub fn pair_rate_and_brightness(
    coincidence_rate: f64,
    signal: ArmEfficiency,
    idler: ArmEfficiency,
    pump_power: f64,
    bandwidth: f64,
) -> Result<RateReport> {
    signal.validate()?;
    idler.validate()?;
    if !(coincidence_rate >= 0.0 && coincidence_rate.is_finite()) {
        return Err(Error::invalid("coincidence_rate", "must be finite and >= 0"));
    }
    if !(pump_power > 0.0) {
        return Err(Error::invalid("pump_power", "must be positive"));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth", "must be positive"));
    }
    let pair_rate = coincidence_rate / (signal.total() * idler.total());
    Ok(RateReport {
        coincidence_rate,
        singles_rates: [0.0; 2],
        pair_generation_rate: pair_rate,
        spectral_brightness: pair_rate / (pump_power * bandwidth * 1e-6),
        pump_power,
        bandwidth,
        signal,
        idler,
    })
}

/// Poisson resample of a histogram's counts; floor and scale are kept.
pub fn resample_histogram(hist: &CorrelationHistogram, seed: u64, run: u64) -> CorrelationHistogram {
    let mut rng = indexed_rng(seed, Stage::Resample, run);
    let mut h = hist.clone();
    for c in h.counts.iter_mut() {
        if *c > 0 {
            *c = Poisson::new(*c as f64).map(|p| p.sample(&mut rng)).unwrap_or(0.0) as u64;
        }
    }
    h
}

/// Refit of resampled run `run`.
pub fn monte_carlo_run(
    hist: &CorrelationHistogram,
    kind: FitKind,
    seed: u64,
    run: u64,
) -> Result<FitResult> {
    fit_histogram(&resample_histogram(hist, seed, run), kind)
}

/// Standard deviations of the fitted quantities across Monte Carlo refits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonteCarloErrors {
    pub runs: usize,
    pub diverged: usize,
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub offset: f64,
    pub peak_value: Option<f64>,
}

/// Largest tolerated fraction of diverged refits.
pub const MAX_DIVERGED_FRACTION: f64 = 0.2;

impl MonteCarloErrors {
    /// Summarizes run results in run order. Fails when more than 20% diverged
    /// or fewer than two fits succeeded.
    pub fn from_runs(runs: &[Result<FitResult>]) -> Result<Self> {
        let ok: Vec<&FitResult> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
        let diverged = runs.len() - ok.len();
        if diverged as f64 > MAX_DIVERGED_FRACTION * runs.len() as f64 || ok.len() < 2 {
            return Err(Error::FitDiverged(format!(
                "{diverged} of {} Monte Carlo refits failed",
                runs.len()
            )));
        }
        let spread = |f: &dyn Fn(&FitResult) -> f64| {
            let xs: Vec<f64> = ok.iter().map(|r| f(r)).collect();
            math::mean_std(&xs).1
        };
        let peak_value = if ok.iter().all(|r| r.peak_value.is_some()) {
            Some(spread(&|r| r.peak_value.map_or(0.0, |p| p.value)))
        } else {
            None
        };
        Ok(MonteCarloErrors {
            runs: runs.len(),
            diverged,
            gamma_s: spread(&|r| r.gamma_s.value),
            gamma_i: spread(&|r| r.gamma_i.value),
            fwhm: spread(&|r| r.fwhm.value),
            amplitude: spread(&|r| r.amplitude.value),
            baseline: spread(&|r| r.baseline.value),
            offset: spread(&|r| r.offset.value),
            peak_value,
        })
    }
}

/// Sequential Monte Carlo error estimate over `n_runs` Poisson resamples.
pub fn monte_carlo_errors(
    hist: &CorrelationHistogram,
    kind: FitKind,
    n_runs: usize,
    seed: u64,
) -> Result<MonteCarloErrors> {
    if n_runs < 2 {
        return Err(Error::invalid("n_runs", "at least two runs required"));
    }
    let runs: Vec<Result<FitResult>> = (0..n_runs as u64)
        .map(|k| monte_carlo_run(hist, kind, seed, k))
        .collect();
    MonteCarloErrors::from_runs(&runs)
}
