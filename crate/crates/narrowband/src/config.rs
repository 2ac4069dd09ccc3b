//! TOML configuration for cavity designs and simulated acquisitions.
//!
//! One schema covers both: `design` needs `[cavity]`, `simulate` needs
//! `[source]`, `[topology]`, `[detectors]` and `[run]`, and `report` reads
//! `[arms]` and `[report]` for the efficiency corrections. Unknown keys are
//! errors. Quantities carry their unit in the key name.
//!
//! ```toml
//! version = 1
//!
//! [cavity]
//! signal_wavelength_nm = 852.3
//! idler_wavelength_nm = 852.3
//! pump_wavelength_nm = 426.15
//! temperature_c = 30.0
//! mirror_in_reflectivity = 0.999
//! mirror_out_reflectivity = 0.97
//! round_trip_loss_per_crystal = 0.01
//!
//! [[cavity.segment]]
//! role = "spdc"            # spdc | tuning | gap
//! length_mm = 30.0
//! signal = "ktp/z"         # registry key, or { index = 1.8, group_index = 1.9 }
//! idler = "ktp/y"
//!
//! [source]
//! pair_rate_hz = 47500.0
//! cross_fwhm_ns = 18.7     # with auto_fwhm_ns, or gamma_s_per_s / gamma_i_per_s
//! auto_fwhm_ns = 41.1
//! modes = 1
//! engine = "cox"           # cox | pair-cluster
//!
//! [arms.signal]
//! coupling = 0.53
//! filter_transmission = 0.63
//!
//! [topology]
//! preset = "hbt"           # pair | hbt | fourfold | custom
//!
//! [detectors]
//! efficiency = 0.69
//! jitter_ps = 350.0
//!
//! [run]
//! duration_s = 10.0
//! seed = 1
//! output = "stream.ptag"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use narrowband_core::cavity::{CavitySpec, CrystalSegment, SegmentRole};
use narrowband_core::materials::MaterialDispersion;
use narrowband_core::sim::{
    DetectorParams, Scenario, ShutterParams, SourceEngine, SourceMode, SourceParams, Topology,
    TopologyElement,
};
use narrowband_core::tags::ChannelInfo;
use narrowband_core::Channel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::Registry;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceConfig>,
    #[serde(default)]
    pub arms: ArmsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detectors: Option<DetectorsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutter: Option<ShutterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunConfig>,
    #[serde(default)]
    pub report: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub pump_wavelength_nm: f64,
    pub temperature_c: f64,
    pub mirror_in_reflectivity: f64,
    pub mirror_out_reflectivity: f64,
    pub round_trip_loss_per_crystal: f64,
    #[serde(rename = "segment")]
    pub segments: Vec<SegmentConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleConfig {
    Spdc,
    Tuning,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub role: RoleConfig,
    pub length_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<MaterialRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idler: Option<MaterialRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaterialRef {
    Key(String),
    Constant(ConstantIndex),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantIndex {
    pub index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Signal frequency at the gain centre; defaults to the signal wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_wavelength_nm: Option<f64>,
    /// Enumerated span; defaults to twice the cluster separation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_ghz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineConfig {
    #[default]
    Cox,
    PairCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub pair_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_fwhm_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_fwhm_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_s_per_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_i_per_s: Option<f64>,
    /// Number of equal-weight modes; ignored when `mode_weights` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    #[serde(default = "one")]
    pub coupling: f64,
    #[serde(default = "one")]
    pub filter_transmission: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            coupling: 1.0,
            filter_transmission: 1.0,
        }
    }
}

impl ArmConfig {
    pub fn transmission(&self) -> f64 {
        self.coupling * self.filter_transmission
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsConfig {
    #[serde(default)]
    pub signal: ArmConfig,
    #[serde(default)]
    pub idler: ArmConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Pair,
    Hbt,
    Fourfold,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub preset: Preset,
    /// Custom topologies only; the arm losses are prepended automatically.
    #[serde(default, rename = "element", skip_serializing_if = "Vec::is_empty")]
    pub elements: Vec<ElementConfig>,
    #[serde(default, rename = "label", skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<LabelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementConfig {
    Loss { channel: u8, transmission: f64 },
    Splitter { input: u8, ratio: f64, outputs: [u8; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub channel: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_ps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dead_time_ns: Option<f64>,
}

/// Defaults for every detector plus per-channel overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsConfig {
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default)]
    pub jitter_ps: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub dead_time_ns: f64,
    #[serde(default, rename = "channel", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<DetectorConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShutterConfig {
    pub period_s: f64,
    pub open_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_power_mw: Option<f64>,
    #[serde(default = "default_cross_bin")]
    pub cross_bin_ns: f64,
    #[serde(default = "default_auto_bin")]
    pub auto_bin_ns: f64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ns: f64,
    #[serde(default = "default_herald_window")]
    pub herald_window_ns: f64,
    #[serde(default = "default_fourfold_window")]
    pub fourfold_window_ns: f64,
}

pub const DEFAULT_CROSS_BIN_NS: f64 = 2.97;
pub const DEFAULT_AUTO_BIN_NS: f64 = 4.95;
pub const DEFAULT_MAX_DELAY_NS: f64 = 500.0;
pub const DEFAULT_HERALD_WINDOW_NS: f64 = 3500.0;
pub const DEFAULT_FOURFOLD_WINDOW_NS: f64 = 42.0;

fn default_cross_bin() -> f64 {
    DEFAULT_CROSS_BIN_NS
}
fn default_auto_bin() -> f64 {
    DEFAULT_AUTO_BIN_NS
}
fn default_max_delay() -> f64 {
    DEFAULT_MAX_DELAY_NS
}
fn default_herald_window() -> f64 {
    DEFAULT_HERALD_WINDOW_NS
}
fn default_fourfold_window() -> f64 {
    DEFAULT_FOURFOLD_WINDOW_NS
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            pump_power_mw: None,
            cross_bin_ns: DEFAULT_CROSS_BIN_NS,
            auto_bin_ns: DEFAULT_AUTO_BIN_NS,
            max_delay_ns: DEFAULT_MAX_DELAY_NS,
            herald_window_ns: DEFAULT_HERALD_WINDOW_NS,
            fourfold_window_ns: DEFAULT_FOURFOLD_WINDOW_NS,
        }
    }
}

fn check(field: &str, ok: bool, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    check(field, v > 0.0 && v.is_finite(), "must be a positive finite number")
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    check(field, v >= 0.0 && v.is_finite(), "must be finite and >= 0")
}

fn fraction(field: &str, v: f64) -> Result<()> {
    check(field, (0.0..=1.0).contains(&v), "must lie in [0, 1]")
}

fn efficiency(field: &str, v: f64) -> Result<()> {
    check(field, v > 0.0 && v <= 1.0, "must lie in (0, 1]")
}

/// Re-labels a core parameter error with the config section it came from.
fn in_section(section: &'static str) -> impl Fn(narrowband_core::Error) -> Error {
    move |e| match e {
        narrowband_core::Error::InvalidParameter { name, reason } => {
            Error::config(format!("{section}.{name}"), reason)
        }
        other => Error::config(section, other.to_string()),
    }
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::config(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", cfg.version),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Field-level checks of every present section.
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.cavity {
            c.validate()?;
        }
        if let Some(d) = &self.design {
            if let Some(w) = d.center_wavelength_nm {
                positive("design.center_wavelength_nm", w)?;
            }
            if let Some(s) = d.span_ghz {
                positive("design.span_ghz", s)?;
            }
        }
        if let Some(s) = &self.source {
            s.validate()?;
        }
        for (name, arm) in [("signal", &self.arms.signal), ("idler", &self.arms.idler)] {
            efficiency(&format!("arms.{name}.coupling"), arm.coupling)?;
            efficiency(&format!("arms.{name}.filter_transmission"), arm.filter_transmission)?;
        }
        if let Some(t) = &self.topology {
            t.validate()?;
        }
        if let Some(d) = &self.detectors {
            d.validate()?;
        }
        if let Some(s) = &self.shutter {
            positive("shutter.period_s", s.period_s)?;
            fraction("shutter.open_fraction", s.open_fraction)?;
        }
        if let Some(r) = &self.run {
            non_negative("run.duration_s", r.duration_s)?;
        }
        let r = &self.report;
        if let Some(p) = r.pump_power_mw {
            positive("report.pump_power_mw", p)?;
        }
        positive("report.cross_bin_ns", r.cross_bin_ns)?;
        positive("report.auto_bin_ns", r.auto_bin_ns)?;
        positive("report.max_delay_ns", r.max_delay_ns)?;
        check(
            "report.max_delay_ns",
            r.max_delay_ns >= r.cross_bin_ns.max(r.auto_bin_ns),
            "must be at least one bin width",
        )?;
        positive("report.herald_window_ns", r.herald_window_ns)?;
        positive("report.fourfold_window_ns", r.fourfold_window_ns)?;
        // Scenario-level consistency (channels, detectors) when simulating is possible.
        if self.source.is_some() && self.topology.is_some() && self.run.is_some() {
            self.scenario()?;
        }
        Ok(())
    }

    pub fn require_cavity(&self) -> Result<&CavityConfig> {
        self.cavity
            .as_ref()
            .ok_or_else(|| Error::config("cavity", "section is required"))
    }

    /// The simulation scenario. A zero duration is reported as such; the core
    /// scenario itself requires a positive one.
    pub fn scenario(&self) -> Result<Scenario> {
        let source = self
            .source
            .as_ref()
            .ok_or_else(|| Error::config("source", "section is required"))?
            .params()?;
        let topology = self
            .topology
            .as_ref()
            .ok_or_else(|| Error::config("topology", "section is required"))?
            .build(&self.arms)?;
        let run = self
            .run
            .as_ref()
            .ok_or_else(|| Error::config("run", "section is required"))?;
        let channels = topology.output_channels().map_err(in_section("topology"))?;
        let default_det = DetectorsConfig::default();
        let dets = self.detectors.as_ref().unwrap_or(&default_det);
        for o in &dets.overrides {
            if let Some(c) = o.channel {
                check(
                    "detectors.channel.channel",
                    channels.contains(&Channel(c)),
                    &format!("channel {c} is not produced by the topology"),
                )?;
            }
        }
        let detectors = channels.iter().map(|&c| (c, dets.for_channel(c.0))).collect();
        let scenario = Scenario {
            source,
            topology,
            detectors,
            shutter: self.shutter.map(|s| ShutterParams {
                period: s.period_s,
                open_fraction: s.open_fraction,
            }),
            duration: if run.duration_s > 0.0 { run.duration_s } else { 1.0 },
            seed: run.seed,
        };
        scenario.validate().map_err(in_section("scenario"))?;
        Ok(Scenario {
            duration: run.duration_s,
            ..scenario
        })
    }

    /// Per-channel dark rates, for accidental corrections.
    pub fn dark_rate(&self, ch: Channel) -> f64 {
        self.detectors
            .as_ref()
            .map_or(0.0, |d| d.for_channel(ch.0).dark_rate)
    }

    /// Detector efficiency of a channel (1 without a detectors section).
    pub fn detector_efficiency(&self, ch: Channel) -> f64 {
        self.detectors
            .as_ref()
            .map_or(1.0, |d| d.for_channel(ch.0).efficiency)
    }
}

impl CavityConfig {
    fn validate(&self) -> Result<()> {
        positive("cavity.signal_wavelength_nm", self.signal_wavelength_nm)?;
        positive("cavity.idler_wavelength_nm", self.idler_wavelength_nm)?;
        positive("cavity.pump_wavelength_nm", self.pump_wavelength_nm)?;
        check(
            "cavity.temperature_c",
            self.temperature_c.is_finite() && self.temperature_c > -273.15,
            "must be above absolute zero",
        )?;
        check(
            "cavity.mirror_in_reflectivity",
            self.mirror_in_reflectivity > 0.0 && self.mirror_in_reflectivity <= 1.0,
            "must lie in (0, 1]",
        )?;
        check(
            "cavity.mirror_out_reflectivity",
            self.mirror_out_reflectivity > 0.0 && self.mirror_out_reflectivity <= 1.0,
            "must lie in (0, 1]",
        )?;
        check(
            "cavity.round_trip_loss_per_crystal",
            (0.0..1.0).contains(&self.round_trip_loss_per_crystal),
            "must lie in [0, 1)",
        )?;
        check("cavity.segment", !self.segments.is_empty(), "at least one segment required")?;
        let spdc = self.segments.iter().filter(|s| s.role == RoleConfig::Spdc).count();
        check("cavity.segment.role", spdc == 1, "exactly one segment must be `spdc`")?;
        check(
            "cavity.segment.role",
            self.segments.iter().filter(|s| s.role == RoleConfig::Tuning).count() <= 1,
            "at most one segment may be `tuning`",
        )?;
        for (k, s) in self.segments.iter().enumerate() {
            positive(&format!("cavity.segment[{k}].length_mm"), s.length_mm)?;
            if s.role != RoleConfig::Gap {
                check(
                    &format!("cavity.segment[{k}].signal"),
                    s.signal.is_some(),
                    "crystal segments need a signal material",
                )?;
                check(
                    &format!("cavity.segment[{k}].idler"),
                    s.idler.is_some(),
                    "crystal segments need an idler material",
                )?;
            }
            for (pol, m) in [("signal", &s.signal), ("idler", &s.idler)] {
                if let Some(MaterialRef::Constant(c)) = m {
                    let f = format!("cavity.segment[{k}].{pol}.index");
                    check(&f, c.index >= 1.0 && c.index.is_finite(), "must be >= 1")?;
                    if let Some(g) = c.group_index {
                        let f = format!("cavity.segment[{k}].{pol}.group_index");
                        check(&f, g >= 1.0 && g.is_finite(), "must be >= 1")?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves materials against the registry.
    pub fn build(&self, registry: &Registry) -> Result<CavitySpec> {
        let resolve = |field: String, m: &Option<MaterialRef>| -> Result<MaterialDispersion> {
            match m {
                None => Ok(MaterialDispersion::vacuum()),
                Some(MaterialRef::Key(k)) => registry.get(k).map_err(|e| Error::config(field, e.to_string())),
                Some(MaterialRef::Constant(c)) => Ok(match c.group_index {
                    Some(g) => MaterialDispersion::constant_with_group("constant", c.index, g),
                    None => MaterialDispersion::constant("constant", c.index),
                }),
            }
        };
        let mut segments = Vec::with_capacity(self.segments.len());
        for (k, s) in self.segments.iter().enumerate() {
            segments.push(CrystalSegment {
                length: s.length_mm * 1e-3,
                material_signal: resolve(format!("cavity.segment[{k}].signal"), &s.signal)?,
                material_idler: resolve(format!("cavity.segment[{k}].idler"), &s.idler)?,
                role: match s.role {
                    RoleConfig::Spdc => SegmentRole::Spdc,
                    RoleConfig::Tuning => SegmentRole::Tuning,
                    RoleConfig::Gap => SegmentRole::Gap,
                },
            });
        }
        let spec = CavitySpec {
            segments,
            mirror_in_reflectivity: self.mirror_in_reflectivity,
            mirror_out_reflectivity: self.mirror_out_reflectivity,
            round_trip_loss_per_crystal: self.round_trip_loss_per_crystal,
            signal_wavelength: self.signal_wavelength_nm * 1e-9,
            idler_wavelength: self.idler_wavelength_nm * 1e-9,
            pump_wavelength: self.pump_wavelength_nm * 1e-9,
            temperature: self.temperature_c + 273.15,
        };
        spec.validate().map_err(in_section("cavity"))?;
        Ok(spec)
    }
}

impl SourceConfig {
    fn validate(&self) -> Result<()> {
        non_negative("source.pair_rate_hz", self.pair_rate_hz)?;
        let widths = (self.cross_fwhm_ns, self.auto_fwhm_ns);
        let gammas = (self.gamma_s_per_s, self.gamma_i_per_s);
        match (widths, gammas) {
            ((Some(c), Some(a)), (None, None)) => {
                positive("source.cross_fwhm_ns", c)?;
                positive("source.auto_fwhm_ns", a)?;
            }
            ((None, None), (Some(s), Some(i))) => {
                positive("source.gamma_s_per_s", s)?;
                positive("source.gamma_i_per_s", i)?;
            }
            _ => {
                return Err(Error::config(
                    "source",
                    "give either cross_fwhm_ns and auto_fwhm_ns, or gamma_s_per_s and gamma_i_per_s",
                ))
            }
        }
        if let Some(m) = self.modes {
            check("source.modes", (1..=256).contains(&m), "must lie in 1..=256")?;
        }
        if let Some(w) = &self.mode_weights {
            check("source.mode_weights", !w.is_empty() && w.len() <= 256, "1 to 256 weights")?;
            check(
                "source.mode_weights",
                w.iter().all(|x| *x > 0.0 && x.is_finite()),
                "weights must be positive",
            )?;
        }
        if let Some(b) = self.intensity_bound {
            check("source.intensity_bound", b >= 4.0 && b.is_finite(), "must be >= 4")?;
        }
        self.params()?.validate().map_err(in_section("source"))
    }

    pub fn params(&self) -> Result<SourceParams> {
        let mut p = match (self.cross_fwhm_ns, self.auto_fwhm_ns, self.gamma_s_per_s, self.gamma_i_per_s) {
            (Some(c), Some(a), _, _) => SourceParams::from_widths(self.pair_rate_hz, c * 1e-9, a * 1e-9)
                .map_err(|_| {
                    Error::config("source.auto_fwhm_ns", "no decay rates reproduce this pair of widths")
                })?,
            (_, _, Some(s), Some(i)) => SourceParams::single_mode(self.pair_rate_hz, s, i),
            _ => return Err(Error::config("source", "decay rates are not specified")),
        };
        if let Some(w) = &self.mode_weights {
            p.modes = w
                .iter()
                .enumerate()
                .map(|(k, &relative_weight)| SourceMode {
                    relative_weight,
                    frequency_offset: k as f64,
                })
                .collect();
        } else if let Some(n) = self.modes {
            p = p.with_equal_modes(n);
        }
        if let Some(b) = self.intensity_bound {
            p.intensity_bound = b;
        }
        p.engine = match self.engine {
            EngineConfig::Cox => SourceEngine::Cox,
            EngineConfig::PairCluster => SourceEngine::PairCluster,
        };
        p.validate().map_err(in_section("source"))?;
        Ok(p)
    }
}

impl TopologyConfig {
    fn validate(&self) -> Result<()> {
        if self.preset != Preset::Custom {
            check(
                "topology.element",
                self.elements.is_empty(),
                "elements are only allowed with preset = \"custom\"",
            )?;
        }
        let mut seen = BTreeSet::new();
        for l in &self.labels {
            check(
                "topology.label.channel",
                seen.insert(l.channel),
                &format!("channel {} labelled twice", l.channel),
            )?;
        }
        for (k, e) in self.elements.iter().enumerate() {
            match e {
                ElementConfig::Loss { transmission, .. } => {
                    fraction(&format!("topology.element[{k}].transmission"), *transmission)?
                }
                ElementConfig::Splitter { ratio, .. } => {
                    fraction(&format!("topology.element[{k}].ratio"), *ratio)?
                }
            }
        }
        Ok(())
    }

    /// The optical network including the arm transmissions.
    pub fn build(&self, arms: &ArmsConfig) -> Result<Topology> {
        let (ts, ti) = (arms.signal.transmission(), arms.idler.transmission());
        let mut t = match self.preset {
            Preset::Pair => Topology::pair(ts, ti),
            Preset::Hbt => Topology::hbt(ts, ti),
            Preset::Fourfold => Topology::fourfold(ts, ti),
            Preset::Custom => {
                let mut t = Topology::pair(ts, ti);
                t.labels.clear();
                t.elements.extend(self.elements.iter().map(|e| match *e {
                    ElementConfig::Loss {
                        channel,
                        transmission,
                    } => TopologyElement::Loss {
                        channel: Channel(channel),
                        transmission,
                    },
                    ElementConfig::Splitter {
                        input,
                        ratio,
                        outputs,
                    } => TopologyElement::Splitter {
                        input: Channel(input),
                        ratio,
                        outputs: [Channel(outputs[0]), Channel(outputs[1])],
                    },
                }));
                t
            }
        };
        let channels = t.output_channels().map_err(in_section("topology"))?;
        for l in &self.labels {
            check(
                "topology.label.channel",
                channels.contains(&Channel(l.channel)),
                &format!("channel {} is not produced by the topology", l.channel),
            )?;
            t.labels.retain(|x| x.id != Channel(l.channel));
            t.labels.push(ChannelInfo {
                id: Channel(l.channel),
                label: l.label.clone(),
            });
        }
        t.labels.sort_by_key(|l| l.id);
        Ok(t)
    }
}

impl Default for DetectorsConfig {
    fn default() -> Self {
        DetectorsConfig {
            efficiency: 1.0,
            jitter_ps: 0.0,
            dark_rate_hz: 0.0,
            dead_time_ns: 0.0,
            overrides: Vec::new(),
        }
    }
}

impl DetectorsConfig {
    fn validate(&self) -> Result<()> {
        fraction("detectors.efficiency", self.efficiency)?;
        non_negative("detectors.jitter_ps", self.jitter_ps)?;
        non_negative("detectors.dark_rate_hz", self.dark_rate_hz)?;
        non_negative("detectors.dead_time_ns", self.dead_time_ns)?;
        let mut seen = BTreeSet::new();
        for (k, o) in self.overrides.iter().enumerate() {
            let f = |name: &str| format!("detectors.channel[{k}].{name}");
            let c = o
                .channel
                .ok_or_else(|| Error::config(f("channel"), "channel id is required"))?;
            check(&f("channel"), seen.insert(c), &format!("channel {c} listed twice"))?;
            if let Some(v) = o.efficiency {
                fraction(&f("efficiency"), v)?;
            }
            if let Some(v) = o.jitter_ps {
                non_negative(&f("jitter_ps"), v)?;
            }
            if let Some(v) = o.dark_rate_hz {
                non_negative(&f("dark_rate_hz"), v)?;
            }
            if let Some(v) = o.dead_time_ns {
                non_negative(&f("dead_time_ns"), v)?;
            }
        }
        Ok(())
    }

    pub fn for_channel(&self, ch: u8) -> DetectorParams {
        let o = self.overrides.iter().find(|o| o.channel == Some(ch));
        let pick = |v: Option<f64>, d: f64| v.unwrap_or(d);
        DetectorParams {
            efficiency: pick(o.and_then(|o| o.efficiency), self.efficiency),
            jitter_fwhm: pick(o.and_then(|o| o.jitter_ps), self.jitter_ps) * 1e-12,
            dark_rate: pick(o.and_then(|o| o.dark_rate_hz), self.dark_rate_hz),
            dead_time: pick(o.and_then(|o| o.dead_time_ns), self.dead_time_ns) * 1e-9,
        }
    }
}
