//! `report` command: the full characterization chain on one stream.
//!
//! cross-correlation → fit → bandwidth; auto-correlation → G²(0) → mode number;
//! heralded counts → g²(0); two-fold rate → pair rate and brightness; four-fold
//! rate when the stream has two signal and two idler detectors. Channel roles come
//! from the labels (`signal*`, `idler*`).

use narrowband_core::analysis::{
    self, bandwidth_estimate, g2_zero, g2_zero_corrected, mode_number_estimate, ArmEfficiency,
    MonteCarloErrors, RateReport,
};
use narrowband_core::correlator::{
    correct_and_normalize, heralded_counts, heralded_counts_offset, CoincidenceCounts,
    CorrelationHistogram, FourfoldCounter, NormalizeMode,
};
use narrowband_core::fit::{fit_auto_correlation, fit_cross_correlation, Estimate, FitKind, FitResult};
use narrowband_core::{Channel, TimeTagStream};
use serde::Serialize;

use crate::config::{Config, ReportConfig};
use crate::error::{Error, Result};
use crate::parallel;
use crate::provenance::Provenance;

/// Gap added to three windows when displacing heralded windows for accidentals.
pub const ACCIDENTAL_GAP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub cross_bin: f64,
    pub auto_bin: f64,
    pub max_delay: f64,
    pub herald_window: f64,
    pub fourfold_window: f64,
    /// mW.
    pub pump_power: Option<f64>,
    pub coupling: [f64; 2],
    pub filter_transmission: [f64; 2],
    /// Detector efficiency and dark rate by channel id.
    pub detection: Vec<(Channel, f64)>,
    pub dark_rates: Vec<(Channel, f64)>,
    pub mc_runs: usize,
    pub mc_seed: u64,
    pub threads: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self::from_report_config(&ReportConfig::default())
    }
}

impl ReportOptions {
    fn from_report_config(r: &ReportConfig) -> Self {
        ReportOptions {
            cross_bin: r.cross_bin_ns * 1e-9,
            auto_bin: r.auto_bin_ns * 1e-9,
            max_delay: r.max_delay_ns * 1e-9,
            herald_window: r.herald_window_ns * 1e-9,
            fourfold_window: r.fourfold_window_ns * 1e-9,
            pump_power: r.pump_power_mw,
            coupling: [1.0; 2],
            filter_transmission: [1.0; 2],
            detection: Vec::new(),
            dark_rates: Vec::new(),
            mc_runs: 0,
            mc_seed: 0,
            threads: 0,
        }
    }

    /// Options from a scenario config: bin widths, windows, pump power, arm
    /// efficiencies and per-detector efficiency and dark rate.
    pub fn from_config(cfg: &Config) -> Self {
        let mut o = Self::from_report_config(&cfg.report);
        o.coupling = [cfg.arms.signal.coupling, cfg.arms.idler.coupling];
        o.filter_transmission = [
            cfg.arms.signal.filter_transmission,
            cfg.arms.idler.filter_transmission,
        ];
        if let Some(d) = &cfg.detectors {
            for ch in 0..=u8::MAX {
                let p = d.for_channel(ch);
                if p.efficiency != 1.0 {
                    o.detection.push((Channel(ch), p.efficiency));
                }
                if p.dark_rate != 0.0 {
                    o.dark_rates.push((Channel(ch), p.dark_rate));
                }
            }
        }
        if let Some(r) = &cfg.run {
            o.threads = r.threads;
            o.mc_seed = r.seed;
        }
        o
    }

    fn lookup(list: &[(Channel, f64)], ch: Channel, default: f64) -> f64 {
        list.iter().find(|(c, _)| *c == ch).map_or(default, |x| x.1)
    }

    pub fn dark_rate(&self, ch: Channel) -> f64 {
        Self::lookup(&self.dark_rates, ch, 0.0)
    }

    pub fn detection(&self, ch: Channel) -> f64 {
        Self::lookup(&self.detection, ch, 1.0)
    }
}

/// Signal and idler detector channels of a stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roles {
    pub signal: Vec<Channel>,
    pub idler: Vec<Channel>,
}

impl Roles {
    /// From channel labels; unlabelled streams fall back to the preset layout
    /// (0, 2 signal; 1, 3 idler).
    pub fn of(stream: &TimeTagStream) -> Roles {
        let by_prefix = |p: &str| -> Vec<Channel> {
            stream
                .channels
                .iter()
                .filter(|c| c.label.to_ascii_lowercase().starts_with(p))
                .map(|c| c.id)
                .collect()
        };
        let (signal, idler) = (by_prefix("signal"), by_prefix("idler"));
        if !signal.is_empty() || !idler.is_empty() {
            return Roles { signal, idler };
        }
        let has = |c: u8| stream.has_channel(Channel(c));
        Roles {
            signal: [0u8, 2].into_iter().filter(|&c| has(c)).map(Channel).collect(),
            idler: [1u8, 3].into_iter().filter(|&c| has(c)).map(Channel).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub stage: &'static str,
    pub status: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossStage {
    pub channels: [Channel; 2],
    pub bin_width_ps: u64,
    pub fit: FitResult,
    /// Cross-correlation FWHM, taken as the correlation time.
    pub tau_c: Estimate,
    pub bandwidth: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloErrors>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AutoStage {
    pub channels: [Channel; 2],
    pub bin_width_ps: u64,
    pub fit: FitResult,
    pub g2_peak: Estimate,
    pub mode_number: Option<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeraldedStage {
    pub herald: Channel,
    pub channels: [Channel; 2],
    pub window: f64,
    pub counts: CoincidenceCounts,
    pub accidental_counts: CoincidenceCounts,
    pub g2_raw: Estimate,
    pub g2_corrected: Option<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoFoldStage {
    /// Accidental-subtracted coincidences within the maximum delay, per pair.
    pub pairs: Vec<([Channel; 2], f64)>,
    pub coincidences: f64,
    pub rate: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourfoldStage {
    pub channels: [Channel; 4],
    pub window: f64,
    pub count: u64,
    pub rate: Estimate,
}

/// Headline numbers in the units they are usually quoted in.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub fwhm_ns: Option<f64>,
    pub bandwidth_mhz: Option<f64>,
    pub g2_unheralded_peak: Option<f64>,
    pub mode_number: Option<f64>,
    pub g2_heralded_raw: Option<f64>,
    pub g2_heralded_corrected: Option<f64>,
    pub two_fold_rate_hz: Option<f64>,
    pub pair_rate_hz: Option<f64>,
    /// Pairs / (s mW MHz).
    pub spectral_brightness: Option<f64>,
    pub fourfold_rate_hz: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StreamInfo {
    pub records: usize,
    pub duration: f64,
    pub live_time: f64,
    pub roles: Roles,
    pub singles_rates: Vec<(Channel, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub ok: bool,
    pub summary: Summary,
    pub stream: StreamInfo,
    pub cross: Option<CrossStage>,
    pub auto: Option<AutoStage>,
    pub heralded: Option<HeraldedStage>,
    pub two_fold: Option<TwoFoldStage>,
    pub rates: Option<RateReport>,
    pub fourfold: Option<FourfoldStage>,
    pub diagnostics: Vec<Diagnostic>,
    pub provenance: Provenance,
}

struct Collector {
    diagnostics: Vec<Diagnostic>,
}

impl Collector {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Option<T> {
        match f() {
            Ok(v) => Some(v),
            Err(e) => {
                self.diagnostics.push(Diagnostic {
                    stage,
                    status: "error",
                    message: e.to_string(),
                });
                None
            }
        }
    }

    fn skip(&mut self, stage: &'static str, why: &str) {
        self.diagnostics.push(Diagnostic {
            stage,
            status: "skipped",
            message: why.into(),
        });
    }
}

fn count_rate(count: f64, live_time: f64) -> Result<Estimate> {
    if !(live_time > 0.0) {
        return Err(Error::Core(narrowband_core::Error::InsufficientData(
            "stream has no live time".into(),
        )));
    }
    Ok(Estimate::new(count / live_time, count.max(1.0).sqrt() / live_time))
}

fn non_empty(stream: &TimeTagStream, ch: Channel) -> Result<()> {
    if stream.count(ch) == 0 {
        return Err(narrowband_core::Error::EmptyChannel(ch.0).into());
    }
    Ok(())
}

/// Coincidences in excess of the flat accidental floor over the whole histogram.
fn excess_coincidences(hist: &CorrelationHistogram, darks: (f64, f64)) -> Result<f64> {
    let h = correct_and_normalize(hist, NormalizeMode::Max, true, darks)?;
    Ok((0..h.len()).map(|j| h.counts[j] as f64 - h.floor[j]).sum())
}

pub fn run_report(stream: &TimeTagStream, opts: &ReportOptions, provenance: Provenance) -> Report {
    let mut c = Collector {
        diagnostics: Vec::new(),
    };
    let roles = Roles::of(stream);
    let info = StreamInfo {
        records: stream.len(),
        duration: stream.duration(),
        live_time: stream.live_time,
        roles: roles.clone(),
        singles_rates: stream
            .channels
            .iter()
            .map(|ch| (ch.id, stream.singles_rate(ch.id)))
            .collect(),
    };
    let sig = roles.signal.first().copied();
    let idl = roles.idler.first().copied();
    if stream.is_empty() {
        c.run::<()>("stream", || {
            Err(narrowband_core::Error::InsufficientData("stream has no records".into()).into())
        });
    }
    let darks = |a: Channel, b: Channel| (opts.dark_rate(a), opts.dark_rate(b));

    let mut first_cross: Option<CorrelationHistogram> = None;
    let cross = match (sig, idl) {
        (Some(s), Some(i)) => c.run("cross-correlation", || {
            non_empty(stream, s)?;
            non_empty(stream, i)?;
            let hist = parallel::cross_correlation(stream, s, i, opts.cross_bin, opts.max_delay, opts.threads)?;
            first_cross = Some(hist.clone());
            let norm = correct_and_normalize(&hist, NormalizeMode::Max, true, darks(s, i))?;
            let fit = fit_cross_correlation(&norm)?;
            let tau_c = fit.fwhm;
            let bandwidth = bandwidth_estimate(tau_c)?;
            let monte_carlo = if opts.mc_runs > 0 {
                Some(analysis::monte_carlo_errors(&norm, FitKind::Cross, opts.mc_runs, opts.mc_seed)?)
            } else {
                None
            };
            Ok(CrossStage {
                channels: [s, i],
                bin_width_ps: hist.bin_width_ps,
                fit,
                tau_c,
                bandwidth,
                monte_carlo,
            })
        }),
        _ => {
            c.skip("cross-correlation", "needs a signal and an idler channel");
            None
        }
    };

    let two_fold = if sig.is_some() && idl.is_some() {
        c.run("two-fold", || {
            let mut pairs = Vec::new();
            for &s in &roles.signal {
                for &i in &roles.idler {
                    let hist = match &first_cross {
                        Some(h) if h.channel_a == s && h.channel_b == i => h.clone(),
                        _ => parallel::cross_correlation(stream, s, i, opts.cross_bin, opts.max_delay, opts.threads)?,
                    };
                    pairs.push(([s, i], excess_coincidences(&hist, darks(s, i))?));
                }
            }
            let coincidences: f64 = pairs.iter().map(|p| p.1).sum();
            Ok(TwoFoldStage {
                rate: count_rate(coincidences, stream.live_time)?,
                pairs,
                coincidences,
            })
        })
    } else {
        None
    };

    let rates = match (&two_fold, &cross, opts.pump_power) {
        (Some(t), Some(x), Some(p)) => c.run("rates", || {
            let arm = |k: usize, chans: &[Channel]| ArmEfficiency {
                coupling: opts.coupling[k],
                filter_transmission: opts.filter_transmission[k],
                detection: chans.iter().map(|&ch| opts.detection(ch)).sum::<f64>() / chans.len() as f64,
            };
            let r = analysis::pair_rate_and_brightness(
                t.rate.value,
                arm(0, &roles.signal),
                arm(1, &roles.idler),
                p,
                x.bandwidth.value,
            )?;
            let singles = |chans: &[Channel]| chans.iter().map(|&ch| stream.singles_rate(ch)).sum::<f64>();
            Ok(r.with_singles(singles(&roles.signal), singles(&roles.idler)))
        }),
        (_, _, None) => {
            c.skip("rates", "pump power not configured");
            None
        }
        _ => {
            c.skip("rates", "needs the two-fold rate and the bandwidth");
            None
        }
    };

    let auto = if roles.signal.len() >= 2 {
        let (a, b) = (roles.signal[0], roles.signal[1]);
        c.run("auto-correlation", || {
            non_empty(stream, a)?;
            non_empty(stream, b)?;
            let hist = parallel::cross_correlation(stream, a, b, opts.auto_bin, opts.max_delay, opts.threads)?;
            let norm = correct_and_normalize(&hist, NormalizeMode::Baseline, false, (0.0, 0.0))?;
            let fit = fit_auto_correlation(&norm)?;
            let g2_peak = fit.peak_value.ok_or_else(|| {
                Error::Core(narrowband_core::Error::FitDiverged("no peak value".into()))
            })?;
            Ok(AutoStage {
                channels: [a, b],
                bin_width_ps: hist.bin_width_ps,
                fit,
                g2_peak,
                mode_number: mode_number_estimate(g2_peak).ok(),
            })
        })
    } else {
        c.skip("auto-correlation", "needs two signal detectors");
        None
    };

    let heralded = match (idl, roles.signal.len() >= 2) {
        (Some(h), true) => {
            let (a, b) = (roles.signal[0], roles.signal[1]);
            c.run("heralded", || {
                let w = opts.herald_window;
                let counts = heralded_counts(stream, h, a, b, w)?;
                let d = 3.0 * w + ACCIDENTAL_GAP;
                let accidental_counts = heralded_counts_offset(stream, h, a, b, w, (d, -d))?;
                let g2_raw = g2_zero(&counts)?;
                Ok(HeraldedStage {
                    herald: h,
                    channels: [a, b],
                    window: w,
                    counts,
                    accidental_counts,
                    g2_raw,
                    g2_corrected: g2_zero_corrected(&counts, &accidental_counts).ok(),
                })
            })
        }
        _ => {
            c.skip("heralded", "needs an idler herald and two signal detectors");
            None
        }
    };

    let fourfold = if roles.signal.len() >= 2 && roles.idler.len() >= 2 {
        let channels = [roles.signal[0], roles.idler[0], roles.signal[1], roles.idler[1]];
        c.run("four-fold", || {
            let mut counter = FourfoldCounter::new(channels, opts.fourfold_window)?;
            counter.push(&stream.records)?;
            let count = counter.finish();
            Ok(FourfoldStage {
                channels,
                window: opts.fourfold_window,
                count,
                rate: count_rate(count as f64, stream.live_time)?,
            })
        })
    } else {
        None
    };

    let summary = Summary {
        fwhm_ns: cross.as_ref().map(|x| x.fit.fwhm.value * 1e9),
        bandwidth_mhz: cross.as_ref().map(|x| x.bandwidth.value * 1e-6),
        g2_unheralded_peak: auto.as_ref().map(|a| a.g2_peak.value),
        mode_number: auto.as_ref().and_then(|a| a.mode_number.map(|n| n.value)),
        g2_heralded_raw: heralded.as_ref().map(|h| h.g2_raw.value),
        g2_heralded_corrected: heralded.as_ref().and_then(|h| h.g2_corrected.map(|g| g.value)),
        two_fold_rate_hz: two_fold.as_ref().map(|t| t.rate.value),
        pair_rate_hz: rates.as_ref().map(|r| r.pair_generation_rate),
        spectral_brightness: rates.as_ref().map(|r| r.spectral_brightness),
        fourfold_rate_hz: fourfold.as_ref().map(|f| f.rate.value),
    };
    Report {
        ok: c.diagnostics.iter().all(|d| d.status != "error"),
        summary,
        stream: info,
        cross,
        auto,
        heralded,
        two_fold,
        rates,
        fourfold,
        diagnostics: c.diagnostics,
        provenance,
    }
}
