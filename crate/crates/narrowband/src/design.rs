//! `design` command: cavity design quantities, verdict and mode spectrum.

use std::path::Path;

use narrowband_core::cavity::{self, ClusterSpectrum, DesignSummary};
use narrowband_core::SPEED_OF_LIGHT;
use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::materials::Registry;
use crate::provenance::Provenance;

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub verdict: Verdict,
    pub summary: DesignSummary,
    pub mode_spectrum: SpectrumSummary,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SingleMode,
    MultiMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub center_frequency_hz: f64,
    pub span_hz: f64,
    pub modes: usize,
    pub effective_mode_count: f64,
    /// Modes with at least half the strongest weight.
    pub strong_modes: usize,
}

pub struct DesignOutput {
    pub report: DesignReport,
    pub spectrum: ClusterSpectrum,
}

pub fn run_design(cfg: &Config, registry: &Registry, provenance: Provenance) -> Result<DesignOutput> {
    let cav = cfg.require_cavity()?;
    let spec = cav.build(registry)?;
    let summary = cavity::design_summary(&spec).map_err(Error::in_stage("design"))?;
    let design = cfg.design.clone().unwrap_or_default();
    let center_wavelength = design
        .center_wavelength_nm
        .map_or(spec.signal_wavelength, |w| w * 1e-9);
    let center = SPEED_OF_LIGHT / center_wavelength;
    let span = design
        .span_ghz
        .map_or(2.0 * summary.cluster_separation, |s| s * 1e9);
    let spectrum = cavity::cluster_spectrum(&spec, center, span)
        .map_err(Error::in_stage("mode spectrum"))?;
    let strong_modes = spectrum.modes.iter().filter(|m| m.weight >= 0.5).count();
    let verdict = if summary.single_mode {
        Verdict::SingleMode
    } else {
        Verdict::MultiMode
    };
    Ok(DesignOutput {
        report: DesignReport {
            verdict,
            mode_spectrum: SpectrumSummary {
                center_frequency_hz: center,
                span_hz: span,
                modes: spectrum.modes.len(),
                effective_mode_count: spectrum.effective_mode_count,
                strong_modes,
            },
            summary,
            provenance,
        },
        spectrum,
    })
}

pub fn write_modes_csv(path: &Path, spectrum: &ClusterSpectrum) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(["signal_frequency_hz", "idler_frequency_hz", "weight"])?;
    for m in &spectrum.modes {
        w.write_record([
            format!("{:.6}", m.signal_frequency),
            format!("{:.6}", m.idler_frequency),
            format!("{:.9e}", m.weight),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.into(),
                message: format!("{other:?}"),
            },
        }
    } else {
        Error::Csv(e)
    }
}
