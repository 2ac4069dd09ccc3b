//! Cluster-effect design theory of a doubly-resonant cavity that holds an SPDC
//! crystal, an optional birefringent tuning crystal and an air gap.
//!
//! Signal and idler see different group-index sums, so their free spectral ranges
//! differ and simultaneous resonances only occur in clusters spaced by
//! `FSR_s·FSR_i / |FSR_s - FSR_i|`. The tuning crystal sets that spacing
//! independently of phase matching; once it covers the full SPDC gain width and the
//! finesse clears `(FSR_s + FSR_i) / (2|FSR_s - FSR_i|)`, a single mode survives.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::materials::MaterialDispersion;
use crate::math;
use crate::SPEED_OF_LIGHT;

/// `x` with `sinc²(x) = 1/2`; maps the SPDC half-width onto the sinc² argument.
const SINC2_HALF_POINT: f64 = 1.391_557_378_251_510_2;

/// Relative tolerance under which two free spectral ranges count as equal.
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Polarization {
    Signal,
    Idler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SegmentRole {
    Spdc,
    Tuning,
    Gap,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrystalSegment {
    /// Metres.
    pub length: f64,
    pub material_signal: MaterialDispersion,
    pub material_idler: MaterialDispersion,
    pub role: SegmentRole,
}

impl CrystalSegment {
    pub fn gap(length: f64) -> Self {
        CrystalSegment {
            length,
            material_signal: MaterialDispersion::vacuum(),
            material_idler: MaterialDispersion::vacuum(),
            role: SegmentRole::Gap,
        }
    }

    pub fn material(&self, pol: Polarization) -> &MaterialDispersion {
        match pol {
            Polarization::Signal => &self.material_signal,
            Polarization::Idler => &self.material_idler,
        }
    }

    fn is_crystal(&self) -> bool {
        self.role != SegmentRole::Gap
    }
}

/// Linear cavity: ordered segments, mirrors and lumped crystal losses.
///
/// The signal is the first polarization label; every index lookup for the signal
/// uses `material_signal` at `signal_wavelength`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CavitySpec {
    pub segments: Vec<CrystalSegment>,
    /// Power reflectivity at the photon wavelength.
    pub mirror_in_reflectivity: f64,
    pub mirror_out_reflectivity: f64,
    /// Lumped power loss per crystal per round trip.
    pub round_trip_loss_per_crystal: f64,
    pub signal_wavelength: f64,
    pub idler_wavelength: f64,
    pub pump_wavelength: f64,
    /// Crystal temperature in kelvin.
    pub temperature: f64,
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("segments", "cavity has no segments"));
        }
        for s in &self.segments {
            if !(s.length > 0.0 && s.length.is_finite()) {
                return Err(Error::invalid("length", "segment lengths must be > 0"));
            }
        }
        let spdc = self
            .segments
            .iter()
            .filter(|s| s.role == SegmentRole::Spdc)
            .count();
        if spdc != 1 {
            return Err(Error::invalid(
                "segments",
                "exactly one segment must have role `spdc`",
            ));
        }
        for (name, r) in [
            ("mirror_in_reflectivity", self.mirror_in_reflectivity),
            ("mirror_out_reflectivity", self.mirror_out_reflectivity),
        ] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1]"));
            }
        }
        if !(self.round_trip_loss_per_crystal >= 0.0 && self.round_trip_loss_per_crystal < 1.0) {
            return Err(Error::invalid(
                "round_trip_loss_per_crystal",
                "must lie in [0, 1)",
            ));
        }
        for (name, w) in [
            ("signal_wavelength", self.signal_wavelength),
            ("idler_wavelength", self.idler_wavelength),
            ("pump_wavelength", self.pump_wavelength),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        Ok(())
    }

    /// Total mechanical length `d`.
    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    pub fn wavelength(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::Signal => self.signal_wavelength,
            Polarization::Idler => self.idler_wavelength,
        }
    }

    pub fn spdc_segment(&self) -> Result<&CrystalSegment> {
        self.segments
            .iter()
            .find(|s| s.role == SegmentRole::Spdc)
            .ok_or_else(|| Error::invalid("segments", "no `spdc` segment"))
    }

    pub fn tuning_segment(&self) -> Option<&CrystalSegment> {
        self.segments.iter().find(|s| s.role == SegmentRole::Tuning)
    }

    /// Group index of a segment for one polarization.
    pub fn group_index(&self, seg: &CrystalSegment, pol: Polarization) -> Result<f64> {
        seg.material(pol)
            .group_index(self.wavelength(pol), self.temperature)
    }

    /// Round-trip optical path divided by two: `Σ n_g L`.
    pub fn optical_length(&self, pol: Polarization) -> Result<f64> {
        let mut sum = 0.0;
        for s in &self.segments {
            sum += self.group_index(s, pol)? * s.length;
        }
        Ok(sum)
    }

    /// `(n_s, n_i)` group indices of a segment.
    pub fn index_pair(&self, seg: &CrystalSegment) -> Result<(f64, f64)> {
        Ok((
            self.group_index(seg, Polarization::Signal)?,
            self.group_index(seg, Polarization::Idler)?,
        ))
    }
}

/// Free spectral range `c / (2 Σ n_g L)` for one polarization.
pub fn fsr(spec: &CavitySpec, pol: Polarization) -> Result<f64> {
    Ok(SPEED_OF_LIGHT / (2.0 * spec.optical_length(pol)?))
}

/// Cluster separation from the two free spectral ranges.
pub fn cluster_separation_from_fsrs(fsr_s: f64, fsr_i: f64) -> Result<f64> {
    if !(fsr_s > 0.0 && fsr_i > 0.0) {
        return Err(Error::invalid("fsr", "free spectral ranges must be > 0"));
    }
    let diff = (fsr_s - fsr_i).abs();
    if diff <= DEGENERATE_TOL * fsr_s.max(fsr_i) {
        return Err(Error::DegenerateFsrs);
    }
    Ok(fsr_s * fsr_i / diff)
}

/// Cluster separation from the birefringent path difference
/// `c / (2 |Σ (n_s - n_i) L|)`. Gap segments share one index for both
/// polarizations and drop out.
pub fn cluster_separation(spec: &CavitySpec) -> Result<f64> {
    let mut delta = 0.0;
    for s in &spec.segments {
        let (ns, ni) = spec.index_pair(s)?;
        delta += (ns - ni) * s.length;
    }
    let path = spec.optical_length(Polarization::Signal)?;
    if delta.abs() <= DEGENERATE_TOL * path {
        return Err(Error::DegenerateFsrs);
    }
    Ok(SPEED_OF_LIGHT / (2.0 * delta.abs()))
}

/// Half-width of the SPDC gain profile, `c / (2 |n_s - n_i| L)` of the SPDC crystal.
pub fn spdc_bandwidth(spec: &CavitySpec) -> Result<f64> {
    let seg = spec.spdc_segment()?;
    let (ns, ni) = spec.index_pair(seg)?;
    spdc_bandwidth_from_indices(ns, ni, seg.length)
}

pub fn spdc_bandwidth_from_indices(n_s: f64, n_i: f64, length: f64) -> Result<f64> {
    let dn = (n_s - n_i).abs();
    if dn == 0.0 {
        return Err(Error::DegenerateBirefringence);
    }
    Ok(SPEED_OF_LIGHT / (2.0 * dn * length))
}

/// Tuning-crystal lengths `[L·r/2, L·r)` with `r = |n_s - n_i| / |n'_s - n'_i|`
/// for which the cluster separation covers the full SPDC gain width while the
/// tuning crystal still leaves net birefringence of the SPDC crystal's sign.
pub fn single_mode_length_window(
    n_s: f64,
    n_i: f64,
    n_ps: f64,
    n_pi: f64,
    spdc_length: f64,
) -> Result<(f64, f64)> {
    let d = n_s - n_i;
    let dp = n_ps - n_pi;
    if d == 0.0 || dp == 0.0 {
        return Err(Error::DegenerateBirefringence);
    }
    if d * dp >= 0.0 {
        return Err(Error::NotCompensating);
    }
    let r = d.abs() / dp.abs();
    Ok((0.5 * spdc_length * r, spdc_length * r))
}

/// Membership test for the window returned by [`single_mode_length_window`]
/// (closed on the left, open on the right).
pub fn in_single_mode_window(window: (f64, f64), tuning_length: f64) -> bool {
    tuning_length >= window.0 && tuning_length < window.1
}

/// Whether only one cluster can fall inside the SPDC gain: the tuning crystal
/// compensates only part of the SPDC crystal's birefringence and the cluster
/// separation is at least the full gain width `2 Δν_SPDC`. For a compensating
/// tuning crystal this holds exactly for `L'` in [`single_mode_length_window`].
pub fn single_cluster_condition(spec: &CavitySpec) -> Result<bool> {
    let spdc = spec.spdc_segment()?;
    let (ns, ni) = spec.index_pair(spdc)?;
    let mut net = 0.0;
    for s in &spec.segments {
        let (a, b) = spec.index_pair(s)?;
        net += (a - b) * s.length;
    }
    let partial = net * (ns - ni) > 0.0;
    Ok(partial && cluster_separation(spec)? >= 2.0 * spdc_bandwidth(spec)?)
}

/// Lowest finesse for which neighbouring modes of a cluster no longer overlap,
/// assuming equal finesse for signal and idler.
pub fn min_finesse_single_mode(fsr_s: f64, fsr_i: f64) -> Result<f64> {
    let diff = (fsr_i - fsr_s).abs();
    if diff <= DEGENERATE_TOL * fsr_s.abs().max(fsr_i.abs()) {
        return Err(Error::DegenerateFsrs);
    }
    Ok((fsr_i + fsr_s) / (2.0 * diff))
}

/// Round-trip power factor `R_in R_out Π (1 - loss)` over crystal segments.
pub fn round_trip_factor(spec: &CavitySpec) -> f64 {
    let crystals = spec.segments.iter().filter(|s| s.is_crystal()).count() as i32;
    spec.mirror_in_reflectivity
        * spec.mirror_out_reflectivity
        * libm::pow(1.0 - spec.round_trip_loss_per_crystal, crystals as f64)
}

/// Finesse `π ρ^{1/4} / (1 - √ρ)` of the round-trip factor ρ.
pub fn finesse(spec: &CavitySpec) -> Result<f64> {
    finesse_from_round_trip(round_trip_factor(spec))
}

pub fn finesse_from_round_trip(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::LossyCavity(rho));
    }
    let s = math::sqrt(rho);
    Ok(PI * math::sqrt(s) / (1.0 - s))
}

/// Cavity mode linewidth (FWHM) `FSR / F`.
pub fn mode_linewidth(spec: &CavitySpec, pol: Polarization) -> Result<f64> {
    Ok(fsr(spec, pol)? / finesse(spec)?)
}

/// Every scalar design quantity plus the single-mode verdict.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesignSummary {
    pub fsr_signal: f64,
    pub fsr_idler: f64,
    pub cluster_separation: f64,
    pub cluster_separation_from_fsrs: f64,
    pub spdc_bandwidth: f64,
    pub finesse: f64,
    pub min_finesse: f64,
    pub linewidth_signal: f64,
    pub linewidth_idler: f64,
    pub group_index_spdc: (f64, f64),
    pub group_index_tuning: Option<(f64, f64)>,
    /// Allowed tuning-crystal lengths, when a compensating tuning crystal is present.
    pub tuning_length_window: Option<(f64, f64)>,
    pub tuning_length: Option<f64>,
    /// See [`single_cluster_condition`].
    pub single_cluster: bool,
    /// `(Δν_s + Δν_i)/2 < |FSR_i - FSR_s|`.
    pub resolved_neighbours: bool,
    pub single_mode: bool,
}

pub fn design_summary(spec: &CavitySpec) -> Result<DesignSummary> {
    spec.validate()?;
    let fsr_signal = fsr(spec, Polarization::Signal)?;
    let fsr_idler = fsr(spec, Polarization::Idler)?;
    let sep = cluster_separation(spec)?;
    let sep_fsr = cluster_separation_from_fsrs(fsr_signal, fsr_idler)?;
    let bw = spdc_bandwidth(spec)?;
    let f = finesse(spec)?;
    let fmin = min_finesse_single_mode(fsr_signal, fsr_idler)?;
    let spdc = spec.spdc_segment()?;
    let gi_spdc = spec.index_pair(spdc)?;
    let (gi_tuning, window, tuning_length) = match spec.tuning_segment() {
        Some(t) => {
            let pair = spec.index_pair(t)?;
            let window = single_mode_length_window(gi_spdc.0, gi_spdc.1, pair.0, pair.1, spdc.length)
                .ok();
            (Some(pair), window, Some(t.length))
        }
        None => (None, None, None),
    };
    let lw_s = fsr_signal / f;
    let lw_i = fsr_idler / f;
    let single_cluster = single_cluster_condition(spec)?;
    let resolved = 0.5 * (lw_s + lw_i) < (fsr_idler - fsr_signal).abs();
    Ok(DesignSummary {
        fsr_signal,
        fsr_idler,
        cluster_separation: sep,
        cluster_separation_from_fsrs: sep_fsr,
        spdc_bandwidth: bw,
        finesse: f,
        min_finesse: fmin,
        linewidth_signal: lw_s,
        linewidth_idler: lw_i,
        group_index_spdc: gi_spdc,
        group_index_tuning: gi_tuning,
        tuning_length_window: window,
        tuning_length,
        single_cluster,
        resolved_neighbours: resolved,
        single_mode: single_cluster && resolved && f > fmin,
    })
}

/// One doubly-resonant signal/idler mode pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterMode {
    pub signal_frequency: f64,
    pub idler_frequency: f64,
    /// Relative emission weight, max-normalized to 1.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClusterSpectrum {
    pub modes: Vec<ClusterMode>,
    pub cluster_separation: f64,
    pub spdc_bandwidth: f64,
    /// `(Σw)² / Σw²`.
    pub effective_mode_count: f64,
}

/// Raw inputs of the mode enumerator. Unlike [`cluster_spectrum`] it accepts equal
/// free spectral ranges, i.e. the fully compensated comb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeGrid {
    /// Signal frequency at the gain centre; signal and idler are both resonant here.
    pub center_frequency: f64,
    pub pump_frequency: f64,
    pub fsr_signal: f64,
    pub fsr_idler: f64,
    /// Mode FWHM linewidths.
    pub linewidth_signal: f64,
    pub linewidth_idler: f64,
    pub spdc_bandwidth: f64,
    /// Full enumerated signal span around the centre.
    pub span: f64,
}

fn lorentzian(detuning: f64, fwhm: f64) -> f64 {
    let x = 2.0 * detuning / fwhm;
    1.0 / (1.0 + x * x)
}

/// Distance from `offset` to the nearest point of the grid `k·spacing`.
fn grid_detuning(offset: f64, spacing: f64) -> f64 {
    offset - math::round(offset / spacing) * spacing
}

/// Enumerates signal modes `ν_c + m·FSR_s` within the span, pairs each with the
/// energy-conserving idler `ν_p - ν_s`, and weights it by the Lorentzian overlap of
/// both fields with their nearest cavity resonance times the sinc² gain envelope
/// (half-width = `spdc_bandwidth`).
pub fn enumerate_modes(grid: &ModeGrid) -> Result<Vec<ClusterMode>> {
    if !(grid.span > 0.0) {
        return Err(Error::invalid("span", "must be > 0"));
    }
    if !(grid.fsr_signal > 0.0 && grid.fsr_idler > 0.0) {
        return Err(Error::invalid("fsr", "must be > 0"));
    }
    if !(grid.linewidth_signal > 0.0 && grid.linewidth_idler > 0.0) {
        return Err(Error::invalid("linewidth", "must be > 0"));
    }
    if !(grid.spdc_bandwidth > 0.0) {
        return Err(Error::invalid("spdc_bandwidth", "must be > 0"));
    }
    let idler_center = grid.pump_frequency - grid.center_frequency;
    let m_max = math::floor(0.5 * grid.span / grid.fsr_signal) as i64;
    let mut modes = Vec::with_capacity((2 * m_max + 1) as usize);
    for m in -m_max..=m_max {
        let offset = m as f64 * grid.fsr_signal;
        let signal = grid.center_frequency + offset;
        let idler = grid.pump_frequency - signal;
        // Signal sits on its own grid; the idler is detuned from its nearest resonance.
        let det_s = grid_detuning(signal - grid.center_frequency, grid.fsr_signal);
        let det_i = grid_detuning(idler - idler_center, grid.fsr_idler);
        let envelope = math::sinc(SINC2_HALF_POINT * offset / grid.spdc_bandwidth);
        let weight = lorentzian(det_s, grid.linewidth_signal)
            * lorentzian(det_i, grid.linewidth_idler)
            * envelope
            * envelope;
        modes.push(ClusterMode {
            signal_frequency: signal,
            idler_frequency: idler,
            weight,
        });
    }
    let max = modes.iter().map(|m| m.weight).fold(0.0, f64::max);
    if max > 0.0 {
        for m in &mut modes {
            m.weight /= max;
        }
    }
    Ok(modes)
}

/// `(Σw)² / Σw²`; equals K for K equal weights.
pub fn effective_mode_count(weights: impl Iterator<Item = f64> + Clone) -> f64 {
    let s: f64 = weights.clone().sum();
    let s2: f64 = weights.map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Doubly-resonant mode spectrum of the cavity around `center_frequency` (signal).
pub fn cluster_spectrum(spec: &CavitySpec, center_frequency: f64, span: f64) -> Result<ClusterSpectrum> {
    spec.validate()?;
    let fsr_s = fsr(spec, Polarization::Signal)?;
    let fsr_i = fsr(spec, Polarization::Idler)?;
    let sep = cluster_separation_from_fsrs(fsr_s, fsr_i)?;
    let bw = spdc_bandwidth(spec)?;
    let f = finesse(spec)?;
    let grid = ModeGrid {
        center_frequency,
        pump_frequency: SPEED_OF_LIGHT / spec.pump_wavelength,
        fsr_signal: fsr_s,
        fsr_idler: fsr_i,
        linewidth_signal: fsr_s / f,
        linewidth_idler: fsr_i / f,
        spdc_bandwidth: bw,
        span,
    };
    let modes = enumerate_modes(&grid)?;
    let k = effective_mode_count(modes.iter().map(|m| m.weight));
    Ok(ClusterSpectrum {
        modes,
        cluster_separation: sep,
        spdc_bandwidth: bw,
        effective_mode_count: k,
    })
}
