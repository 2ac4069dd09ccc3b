//! Weighted least-squares fits of the cross- and auto-correlation line shapes.
//!
//! Both fits work on the histogram values (`(count - floor)·scale`) of
//! full-exposure bins with errors `√max(count, 1)·scale`, so they apply equally to
//! raw, corrected and normalized histograms. Internally times are in ns and decay
//! rates are fitted through their logarithms.

mod lm;
mod models;

pub use lm::{levenberg_marquardt, LmOptions, LmOutcome, Observation};
pub use models::{
    auto_bin_mean, auto_fwhm, auto_shape, cross_bin_mean, cross_fwhm, cross_shape,
    rates_from_widths, AUTO_HALF_HEIGHT_X,
};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use crate::correlator::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::math;

/// Minimum number of usable bins on each side of the maximum.
pub const MIN_BINS_PER_SIDE: usize = 10;

/// Bins on each side of the maximum summed for the peak significance test.
const PEAK_SUM_BINS: usize = 3;

const NS: f64 = 1e-9;

/// A value with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub const fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FitKind {
    /// `A·[H(u)e^{-2γ_s u} + H(-u)e^{2γ_i u}] + B`, `u = τ - τ0`.
    Cross,
    /// `B·(1 + V·[e^{-Γ|u|}(1 + Γ|u|)]²)`, `Γ = (γ_s + γ_i)/2`.
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub kind: FitKind,
    /// 1/s. The auto-correlation only constrains `Γ`; both rates then report `Γ`.
    pub gamma_s: Estimate,
    pub gamma_i: Estimate,
    /// Peak height above baseline in histogram value units.
    pub amplitude: Estimate,
    pub baseline: Estimate,
    /// Peak position, s.
    pub offset: Estimate,
    /// Auto-correlation peak visibility `V`.
    pub visibility: Option<Estimate>,
    /// s.
    pub fwhm: Estimate,
    /// Auto-correlation peak over baseline, `1 + V`.
    pub peak_value: Option<Estimate>,
    pub chi_square: f64,
    pub dof: usize,
    pub chi_square_reduced: f64,
    /// Names of the internal parameters indexing [`Self::covariance`].
    pub parameters: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl FitResult {
    /// Correlation of internal parameters `i` and `j`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let c = &self.covariance;
        c[i][j] / math::sqrt(c[i][i] * c[j][j])
    }
}

struct Bins {
    left: Vec<f64>,
    width: f64,
    obs: Vec<Observation>,
}

impl Bins {
    fn from_histogram(hist: &CorrelationHistogram) -> Bins {
        let width = hist.bin_width_ps as f64 * 1e-3;
        let mut left = Vec::new();
        let mut obs = Vec::new();
        for j in 0..hist.len() {
            if hist.exposure(j) < 1.0 {
                continue;
            }
            left.push(hist.bin_left_ps(j) as f64 * 1e-3);
            obs.push(Observation {
                y: hist.value(j),
                sigma: math::sqrt(hist.counts[j].max(1) as f64) * hist.scale,
            });
        }
        Bins { left, width, obs }
    }

    fn centre(&self, i: usize) -> f64 {
        self.left[i] + 0.5 * self.width
    }

    fn baseline_guess(&self) -> f64 {
        let n = self.obs.len();
        let per_side = (math::round(0.1 * n as f64 / 2.0) as usize).clamp(1, n / 2);
        let outer = self.obs[..per_side].iter().chain(&self.obs[n - per_side..]);
        outer.map(|o| o.y).sum::<f64>() / (2 * per_side) as f64
    }

    /// Index of the maximum, after checking the peak preconditions.
    fn peak(&self, baseline: f64) -> Result<usize> {
        if self.obs.len() < 2 * MIN_BINS_PER_SIDE + 1 {
            return Err(Error::InsufficientData(format!(
                "{} full bins, need {}",
                self.obs.len(),
                2 * MIN_BINS_PER_SIDE + 1
            )));
        }
        let (imax, top) = self
            .obs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, o)| if o.y > acc.1 { (i, o.y) } else { acc });
        if imax < MIN_BINS_PER_SIDE || self.obs.len() - 1 - imax < MIN_BINS_PER_SIDE {
            return Err(Error::InsufficientData(format!(
                "maximum at bin {imax} leaves fewer than {MIN_BINS_PER_SIDE} bins on one side"
            )));
        }
        // A broad peak in sparse data may clear 3σ only summed over its top bins.
        let near = &self.obs[imax - PEAK_SUM_BINS..=imax + PEAK_SUM_BINS];
        let excess: f64 = near.iter().map(|o| o.y - baseline).sum();
        let spread = math::sqrt(near.iter().map(|o| o.sigma * o.sigma).sum());
        if !(top - baseline > 3.0 * self.obs[imax].sigma || excess > 3.0 * spread) {
            return Err(Error::InsufficientData("no peak above the baseline".into()));
        }
        Ok(imax)
    }

    /// Distance from the peak to the first bin centre below half height, walking
    /// in direction `dir`, interpolated linearly.
    fn half_distance(&self, peak: usize, baseline: f64, dir: isize) -> f64 {
        let half = 0.5 * (self.obs[peak].y - baseline);
        let mut prev = peak;
        let mut i = peak as isize + dir;
        while i >= 0 && (i as usize) < self.obs.len() {
            let j = i as usize;
            let h = self.obs[j].y - baseline;
            if h < half {
                let hp = self.obs[prev].y - baseline;
                let frac = if hp > h { (hp - half) / (hp - h) } else { 0.5 };
                let d = (self.centre(prev) - self.centre(peak)).abs() + frac * self.width;
                return d.max(0.25 * self.width);
            }
            prev = j;
            i += dir;
        }
        0.25 * (self.left[self.left.len() - 1] - self.left[0])
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| String::from(*s)).collect()
}

fn quad(grad: &[f64], cov: &[Vec<f64>]) -> f64 {
    let mut v = 0.0;
    for i in 0..grad.len() {
        for j in 0..grad.len() {
            v += grad[i] * cov[i][j] * grad[j];
        }
    }
    math::sqrt(v.max(0.0))
}

fn sd(cov: &[Vec<f64>], i: usize) -> f64 {
    math::sqrt(cov[i][i].max(0.0))
}

/// Fits the asymmetric two-sided exponential to a signal–idler histogram.
pub fn fit_cross_correlation(hist: &CorrelationHistogram) -> Result<FitResult> {
    let bins = Bins::from_histogram(hist);
    if bins.obs.is_empty() {
        return Err(Error::InsufficientData("histogram has no full bins".into()));
    }
    let b0 = bins.baseline_guess();
    let peak = bins.peak(b0)?;
    let a0 = bins.obs[peak].y - b0;
    let ds = bins.half_distance(peak, b0, 1);
    let di = bins.half_distance(peak, b0, -1);
    let p0 = [
        a0,
        b0,
        bins.centre(peak),
        math::ln(LN_2 / (2.0 * ds)),
        math::ln(LN_2 / (2.0 * di)),
    ];
    let scales = [a0.abs(), a0.abs(), bins.width, 1.0, 1.0];
    let w = bins.width;
    let model = |i: usize, p: &[f64]| {
        let u = bins.left[i] - p[2];
        p[1] + p[0] * cross_bin_mean(u, u + w, math::exp(p[3]), math::exp(p[4]))
    };
    let out = levenberg_marquardt(model, &bins.obs, &p0, &scales, &LmOptions::default())?;
    let p = &out.params;
    let cov = &out.covariance;
    let (gs, gi) = (math::exp(p[3]), math::exp(p[4]));
    if !(p[0] > 0.0) {
        return Err(Error::FitDiverged("non-positive amplitude".into()));
    }
    let fwhm = cross_fwhm(gs, gi);
    let grad = [0.0, 0.0, 0.0, -LN_2 / (2.0 * gs), -LN_2 / (2.0 * gi)];
    let dof = bins.obs.len() - p.len();
    Ok(FitResult {
        kind: FitKind::Cross,
        gamma_s: Estimate::new(gs / NS, gs / NS * sd(cov, 3)),
        gamma_i: Estimate::new(gi / NS, gi / NS * sd(cov, 4)),
        amplitude: Estimate::new(p[0], sd(cov, 0)),
        baseline: Estimate::new(p[1], sd(cov, 1)),
        offset: Estimate::new(p[2] * NS, sd(cov, 2) * NS),
        visibility: None,
        fwhm: Estimate::new(fwhm * NS, quad(&grad, cov) * NS),
        peak_value: None,
        chi_square: out.chi_square,
        dof,
        chi_square_reduced: out.chi_square / dof as f64,
        parameters: names(&["amplitude", "baseline", "offset_ns", "ln_gamma_s_per_ns", "ln_gamma_i_per_ns"]),
        covariance: out.covariance,
        iterations: out.iterations,
    })
}

/// Fits the thermal bunching peak of an auto-correlation histogram.
pub fn fit_auto_correlation(hist: &CorrelationHistogram) -> Result<FitResult> {
    let bins = Bins::from_histogram(hist);
    if bins.obs.is_empty() {
        return Err(Error::InsufficientData("histogram has no full bins".into()));
    }
    let b0 = bins.baseline_guess();
    if !(b0 > 0.0) {
        return Err(Error::InsufficientData("baseline is not positive".into()));
    }
    let peak = bins.peak(b0)?;
    let v0 = bins.obs[peak].y / b0 - 1.0;
    let d = 0.5 * (bins.half_distance(peak, b0, 1) + bins.half_distance(peak, b0, -1));
    let p0 = [b0, v0, bins.centre(peak), math::ln(AUTO_HALF_HEIGHT_X / d)];
    let scales = [b0, v0.max(0.1), bins.width, 1.0];
    let w = bins.width;
    let model = |i: usize, p: &[f64]| {
        let u = bins.left[i] - p[2];
        p[0] * (1.0 + p[1] * auto_bin_mean(u, u + w, math::exp(p[3])))
    };
    let out = levenberg_marquardt(model, &bins.obs, &p0, &scales, &LmOptions::default())?;
    let p = &out.params;
    let cov = &out.covariance;
    if !(p[0] > 0.0 && p[1] > 0.0) {
        return Err(Error::FitDiverged("non-positive baseline or visibility".into()));
    }
    let g = math::exp(p[3]);
    let fwhm = auto_fwhm(g);
    let gamma = Estimate::new(g / NS, g / NS * sd(cov, 3));
    let dof = bins.obs.len() - p.len();
    Ok(FitResult {
        kind: FitKind::Auto,
        gamma_s: gamma,
        gamma_i: gamma,
        amplitude: Estimate::new(p[0] * p[1], quad(&[p[1], p[0], 0.0, 0.0], cov)),
        baseline: Estimate::new(p[0], sd(cov, 0)),
        offset: Estimate::new(p[2] * NS, sd(cov, 2) * NS),
        visibility: Some(Estimate::new(p[1], sd(cov, 1))),
        fwhm: Estimate::new(fwhm * NS, fwhm * sd(cov, 3) * NS),
        peak_value: Some(Estimate::new(1.0 + p[1], sd(cov, 1))),
        chi_square: out.chi_square,
        dof,
        chi_square_reduced: out.chi_square / dof as f64,
        parameters: names(&["baseline", "visibility", "offset_ns", "ln_gamma_per_ns"]),
        covariance: out.covariance,
        iterations: out.iterations,
    })
}

pub fn fit_histogram(hist: &CorrelationHistogram, kind: FitKind) -> Result<FitResult> {
    match kind {
        FitKind::Cross => fit_cross_correlation(hist),
        FitKind::Auto => fit_auto_correlation(hist),
    }
}

/// Expected bin values of a model, for synthetic data and residual plots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelCurve {
    Cross {
        amplitude: f64,
        baseline: f64,
        offset: f64,
        gamma_s: f64,
        gamma_i: f64,
    },
    Auto {
        baseline: f64,
        visibility: f64,
        offset: f64,
        gamma: f64,
    },
}

impl ModelCurve {
    pub fn from_fit(fit: &FitResult) -> ModelCurve {
        match fit.kind {
            FitKind::Cross => ModelCurve::Cross {
                amplitude: fit.amplitude.value,
                baseline: fit.baseline.value,
                offset: fit.offset.value,
                gamma_s: fit.gamma_s.value,
                gamma_i: fit.gamma_i.value,
            },
            FitKind::Auto => ModelCurve::Auto {
                baseline: fit.baseline.value,
                visibility: fit.visibility.map_or(0.0, |v| v.value),
                offset: fit.offset.value,
                gamma: fit.gamma_s.value,
            },
        }
    }

    /// Mean over the delay interval `[left, left + width)`, seconds.
    pub fn bin_mean(&self, left: f64, width: f64) -> f64 {
        match *self {
            ModelCurve::Cross {
                amplitude,
                baseline,
                offset,
                gamma_s,
                gamma_i,
            } => {
                let u = (left - offset) / NS;
                baseline + amplitude * cross_bin_mean(u, u + width / NS, gamma_s * NS, gamma_i * NS)
            }
            ModelCurve::Auto {
                baseline,
                visibility,
                offset,
                gamma,
            } => {
                let u = (left - offset) / NS;
                baseline * (1.0 + visibility * auto_bin_mean(u, u + width / NS, gamma * NS))
            }
        }
    }

    /// Expected value of every bin of `hist`'s layout.
    pub fn expected(&self, hist: &CorrelationHistogram) -> Vec<f64> {
        (0..hist.len())
            .map(|j| self.bin_mean(hist.bin_left_ps(j) as f64 * 1e-12, hist.bin_width()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tags::Channel;

    fn layout(bin_ps: u64, max_ps: u64) -> CorrelationHistogram {
        CorrelationHistogram::new(Channel(0), Channel(1), bin_ps, max_ps).unwrap()
    }

    /// Histogram whose counts are the rounded model, scaled large enough that
    /// rounding is negligible.
    fn exact(model: ModelCurve, bin_ps: u64, max_ps: u64) -> CorrelationHistogram {
        let mut h = layout(bin_ps, max_ps);
        let e = model.expected(&h);
        h.counts = e.iter().map(|v| math::round(*v) as u64).collect();
        h
    }

    #[test]
    fn cross_recovers_exact_model() {
        let model = ModelCurve::Cross {
            amplitude: 1e13,
            baseline: 1e11,
            offset: 1.3e-9,
            gamma_s: 8.0e7,
            gamma_i: 2.4e7,
        };
        let h = exact(model, 2970, 300_000);
        let fit = fit_cross_correlation(&h).unwrap();
        assert!((fit.gamma_s.value / 8.0e7 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.gamma_i.value / 2.4e7 - 1.0).abs() < 1e-6);
        assert!((fit.offset.value - 1.3e-9).abs() < 1e-15);
        assert!((fit.fwhm.value / cross_fwhm(8.0e7, 2.4e7) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn auto_recovers_exact_model() {
        let model = ModelCurve::Auto {
            baseline: 1e12,
            visibility: 0.98,
            offset: -0.4e-9,
            gamma: 5.2e7,
        };
        let h = exact(model, 4950, 400_000);
        let fit = fit_auto_correlation(&h).unwrap();
        assert!((fit.gamma_s.value / 5.2e7 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.peak_value.unwrap().value - 1.98).abs() < 1e-6);
        assert!((fit.fwhm.value * 5.2e7 - 2.0 * AUTO_HALF_HEIGHT_X).abs() < 1e-5);
    }

    #[test]
    fn flat_histogram_has_no_peak() {
        let mut h = layout(1000, 100_000);
        h.counts.iter_mut().for_each(|c| *c = 10_000);
        assert!(matches!(fit_cross_correlation(&h), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn sparse_broad_peak_is_found() {
        // No single bin clears 3σ here, the top seven together do.
        let model = ModelCurve::Auto {
            baseline: 9.0,
            visibility: 1.0,
            offset: 0.0,
            gamma: 5.2e7,
        };
        let mut h = exact(model, 4950, 500_000);
        h.floor = model.expected(&h).iter().zip(&h.counts).map(|(v, &c)| c as f64 - v).collect();
        let fit = fit_auto_correlation(&h).unwrap();
        assert!((fit.gamma_s.value / 5.2e7 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn too_narrow_histogram() {
        let model = ModelCurve::Cross {
            amplitude: 1e6,
            baseline: 10.0,
            offset: 0.0,
            gamma_s: 1e8,
            gamma_i: 1e8,
        };
        let h = exact(model, 2970, 20_000);
        assert!(matches!(fit_cross_correlation(&h), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn peak_at_the_edge_is_rejected() {
        let model = ModelCurve::Cross {
            amplitude: 1e6,
            baseline: 10.0,
            offset: 95e-9,
            gamma_s: 1e8,
            gamma_i: 1e8,
        };
        let h = exact(model, 2970, 100_000);
        assert!(matches!(fit_cross_correlation(&h), Err(Error::InsufficientData(_))));
    }
}
