//! Command-line interface. Exit codes: 0 ok, 1 error, 2 multi-mode design verdict.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use narrowband_core::analysis::{self, g2_zero, g2_zero_corrected};
use narrowband_core::correlator::{
    correct_and_normalize, heralded_counts, heralded_counts_offset, oracle, CorrelationHistogram,
    FourfoldCounter, NormalizeMode,
};
use narrowband_core::fit::{fit_histogram, FitKind};
use narrowband_core::tags::TimeTag;
use narrowband_core::{Channel, TimeTagStream};
use serde::{Deserialize, Serialize};

use crate::config::{self, Config};
use crate::design::{self, Verdict};
use crate::error::{Error, Result};
use crate::format::{self, PtagReader, PtagWriter, Sidecar};
use crate::materials::Registry;
use crate::parallel;
use crate::provenance::Provenance;
use crate::report::{self, ReportOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MULTI_MODE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "narrowband", version, about = "Cluster-effect OPO design, photon-pair simulation and time-tag analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cavity design report and doubly-resonant mode spectrum.
    Design(DesignArgs),
    /// Simulate a time-tag stream from a scenario.
    Simulate(SimulateArgs),
    /// Delay histogram of two channels, or a four-fold count.
    Correlate(CorrelateArgs),
    /// Fit a histogram written by `correlate`.
    Fit(FitArgs),
    /// Heralded g2(0) over a sweep of coincidence windows.
    G2(G2Args),
    /// Full characterization of one stream.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for design.json and modes.csv.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.output`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds; overrides `run.duration_s`.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub a: u8,
    #[arg(long, default_value_t = 1)]
    pub b: u8,
    #[arg(long, default_value_t = config::DEFAULT_CROSS_BIN_NS)]
    pub bin_width_ns: f64,
    #[arg(long, default_value_t = config::DEFAULT_MAX_DELAY_NS)]
    pub max_delay_ns: f64,
    /// Use the quadratic reference implementation.
    #[arg(long)]
    pub brute_force: bool,
    /// Count four-fold coincidences on these four channels instead.
    #[arg(long, value_delimiter = ',')]
    pub fourfold: Option<Vec<u8>>,
    #[arg(long, default_value_t = config::DEFAULT_FOURFOLD_WINDOW_NS)]
    pub window_ns: f64,
    /// Histogram CSV; the histogram itself goes to `<output>.json`. JSON results
    /// of four-fold counts go to stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Cross,
    Auto,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizeArg {
    Raw,
    Max,
    Baseline,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Histogram JSON, or the CSV written next to it.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "cross")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "max")]
    pub normalize: NormalizeArg,
    #[arg(long)]
    pub subtract_accidentals: bool,
    /// Dark rates of channels a and b, Hz.
    #[arg(long, value_delimiter = ',')]
    pub dark_rates: Option<Vec<f64>>,
    /// Poisson-resampled refits for Monte Carlo errors.
    #[arg(long, default_value_t = 0)]
    pub mc_runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct G2Args {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub herald: u8,
    #[arg(long, default_value_t = 0)]
    pub a: u8,
    #[arg(long, default_value_t = 2)]
    pub b: u8,
    /// Windows to evaluate, ns.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,2500,3000,3500,5000")]
    pub windows_ns: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Scenario config supplying efficiencies, dark rates, pump power and bins.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pump_power_mw: Option<f64>,
    #[arg(long)]
    pub mc_runs: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Histogram file written by `correlate` and read by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramFile {
    pub histogram: CorrelationHistogram,
    pub method: String,
    pub provenance: Provenance,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            EXIT_ERROR
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Design(a) => cmd_design(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| EXIT_OK),
        Command::Correlate(a) => cmd_correlate(&a).map(|_| EXIT_OK),
        Command::Fit(a) => cmd_fit(&a).map(|_| EXIT_OK),
        Command::G2(a) => cmd_g2(&a).map(|_| EXIT_OK),
        Command::Report(a) => cmd_report(&a),
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn cmd_design(a: &DesignArgs) -> Result<i32> {
    let cfg = Config::load(&a.config)?;
    let registry = Registry::load()?;
    let mut prov = Provenance::new();
    prov.add_file("config", &a.config)?;
    let out = design::run_design(&cfg, &registry, prov)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let json = a.out_dir.join("design.json");
    write_json(Some(&json), &out.report)?;
    design::write_modes_csv(&a.out_dir.join("modes.csv"), &out.spectrum)?;
    let s = &out.report.summary;
    println!(
        "FSR signal {:.4} GHz, idler {:.4} GHz; cluster separation {:.2} GHz; SPDC bandwidth {:.2} GHz",
        s.fsr_signal * 1e-9,
        s.fsr_idler * 1e-9,
        s.cluster_separation * 1e-9,
        s.spdc_bandwidth * 1e-9
    );
    println!("finesse {:.1} (minimum {:.1})", s.finesse, s.min_finesse);
    Ok(match out.report.verdict {
        Verdict::SingleMode => {
            println!("verdict: single-mode");
            EXIT_OK
        }
        Verdict::MultiMode => {
            println!("verdict: multi-mode");
            EXIT_MULTI_MODE
        }
    })
}

/// Simulates a scenario config into a PTAG file and sidecar.
pub fn cmd_simulate(a: &SimulateArgs) -> Result<Sidecar> {
    let mut cfg = Config::load(&a.config)?;
    let run = cfg
        .run
        .as_mut()
        .ok_or_else(|| Error::config("run", "section is required"))?;
    if let Some(s) = a.seed {
        run.seed = s;
    }
    if let Some(d) = a.duration {
        run.duration_s = d;
    }
    if let Some(t) = a.threads {
        run.threads = t;
    }
    let output = a
        .output
        .clone()
        .or_else(|| run.output.clone())
        .ok_or_else(|| Error::config("run.output", "no output path (use --output)"))?;
    let threads = run.threads;
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let config_hash = crate::provenance::hash_file(&a.config)?;

    let mut writer = PtagWriter::create(&output)?;
    let mut counts = [0u64; 256];
    let mut failure: Option<Error> = None;
    let (header, stats) = if scenario.duration > 0.0 {
        let header = scenario.stream_header()?;
        let stats = parallel::simulate_with(&scenario, threads, |chunk: &[TimeTag]| {
            for t in chunk {
                counts[t.channel.0 as usize] += 1;
            }
            if failure.is_none() {
                if let Err(e) = writer.write(chunk) {
                    failure = Some(e);
                }
            }
        })?;
        (header, Some(stats))
    } else {
        let probe = narrowband_core::sim::Scenario {
            duration: 1.0,
            ..scenario.clone()
        };
        let mut header = probe.stream_header()?;
        header.duration_ps = 0;
        header.live_time = 0.0;
        (header, None)
    };
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish()?;
    let mut sidecar = Sidecar::from_header(&header, &counts);
    sidecar.seed = Some(scenario.seed);
    sidecar.producer = serde_json::json!({
        "tool": format!("narrowband {}", env!("CARGO_PKG_VERSION")),
        "config_sha256": config_hash,
        "stats": stats,
    });
    format::write_sidecar(&output, &sidecar)?;
    eprintln!(
        "wrote {} records ({:.3} s live) to {}",
        sidecar.record_count,
        sidecar.live_time_s,
        output.display()
    );
    Ok(sidecar)
}

fn histogram_csv(path: &Path, h: &CorrelationHistogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| design::csv_io(path, e))?;
    w.write_record(["bin_left_ps", "bin_right_ps", "count", "exposure"])?;
    for j in 0..h.len() {
        let left = h.bin_left_ps(j);
        w.write_record([
            left.to_string(),
            (left + h.bin_width_ps as i64).to_string(),
            h.counts[j].to_string(),
            format!("{}", h.exposure(j)),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FourfoldOutput {
    channels: Vec<u8>,
    window_ns: f64,
    count: u64,
    live_time: f64,
    rate: f64,
    method: &'static str,
    provenance: Provenance,
}

pub fn cmd_correlate(a: &CorrelateArgs) -> Result<()> {
    let mut prov = Provenance::new();
    prov.add_file("stream", &a.input)?;
    if let Some(ch) = &a.fourfold {
        if ch.len() != 4 {
            return Err(Error::config("fourfold", "exactly four channels required"));
        }
        let channels = [Channel(ch[0]), Channel(ch[1]), Channel(ch[2]), Channel(ch[3])];
        let window = a.window_ns * 1e-9;
        let (count, live_time, method) = if a.brute_force {
            let stream = format::read_stream(&a.input)?;
            for c in channels {
                stream.require_channel(c)?;
            }
            (oracle::fourfold_count(&stream, channels, window), stream.live_time, "brute-force")
        } else {
            // Streams the file: four-fold runs can exceed memory.
            let live_time = format::read_sidecar(&a.input)?
                .map(|s| s.live_time_s)
                .unwrap_or(0.0);
            let mut counter = FourfoldCounter::new(channels, window)?;
            let mut reader = PtagReader::open(&a.input)?;
            let mut chunk = Vec::new();
            while reader.next_chunk(&mut chunk)? {
                counter.push(&chunk)?;
            }
            (counter.finish(), live_time, "streaming")
        };
        let out = FourfoldOutput {
            channels: ch.clone(),
            window_ns: a.window_ns,
            count,
            live_time,
            rate: if live_time > 0.0 { count as f64 / live_time } else { 0.0 },
            method,
            provenance: prov,
        };
        return write_json(a.output.as_deref(), &out);
    }
    let stream = format::read_stream(&a.input)?;
    let (ca, cb) = (Channel(a.a), Channel(a.b));
    let (bw, m) = (a.bin_width_ns * 1e-9, a.max_delay_ns * 1e-9);
    let (hist, method) = if a.brute_force {
        (oracle::cross_correlation(&stream, ca, cb, bw, m)?, "brute-force")
    } else {
        (parallel::cross_correlation(&stream, ca, cb, bw, m, a.threads)?, "two-pointer")
    };
    let file = HistogramFile {
        histogram: hist,
        method: method.into(),
        provenance: prov,
    };
    match &a.output {
        Some(p) => {
            histogram_csv(p, &file.histogram)?;
            write_json(Some(&format::sidecar_path(p)), &file)?;
            eprintln!("{} coincidences in {} bins", file.histogram.total(), file.histogram.len());
            Ok(())
        }
        None => write_json(None, &file),
    }
}

fn read_histogram(path: &Path) -> Result<HistogramFile> {
    let json = if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        format::sidecar_path(path)
    };
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: json,
        message: e.to_string(),
    })
}

#[derive(Debug, Serialize)]
struct FitOutput {
    fit: narrowband_core::fit::FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<analysis::MonteCarloErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth: Option<narrowband_core::fit::Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_number: Option<narrowband_core::fit::Estimate>,
    provenance: Provenance,
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let file = read_histogram(&a.input)?;
    let mut prov = Provenance::new();
    prov.add_file("histogram", &a.input)?;
    prov.seed = (a.mc_runs > 0).then_some(a.seed);
    let darks = match a.dark_rates.as_deref() {
        None => (0.0, 0.0),
        Some(&[da, db]) => (da, db),
        Some(_) => return Err(Error::config("dark_rates", "exactly two rates required")),
    };
    let hist = match a.normalize {
        NormalizeArg::Raw if a.subtract_accidentals || darks != (0.0, 0.0) => {
            return Err(Error::config("normalize", "corrections need max or baseline normalization"))
        }
        NormalizeArg::Raw => file.histogram.raw(),
        NormalizeArg::Max => correct_and_normalize(&file.histogram, NormalizeMode::Max, a.subtract_accidentals, darks)?,
        NormalizeArg::Baseline => {
            correct_and_normalize(&file.histogram, NormalizeMode::Baseline, a.subtract_accidentals, darks)?
        }
    };
    let kind = match a.kind {
        KindArg::Cross => FitKind::Cross,
        KindArg::Auto => FitKind::Auto,
    };
    let fit = fit_histogram(&hist, kind)?;
    let monte_carlo = if a.mc_runs > 0 {
        Some(analysis::monte_carlo_errors(&hist, kind, a.mc_runs, a.seed)?)
    } else {
        None
    };
    let out = FitOutput {
        bandwidth: match kind {
            FitKind::Cross => analysis::bandwidth_estimate(fit.fwhm).ok(),
            FitKind::Auto => None,
        },
        mode_number: fit.peak_value.and_then(|p| analysis::mode_number_estimate(p).ok()),
        fit,
        monte_carlo,
        provenance: prov,
    };
    write_json(a.output.as_deref(), &out)
}

#[derive(Debug, Serialize)]
struct G2Row {
    window_ns: f64,
    counts: narrowband_core::correlator::CoincidenceCounts,
    accidental_counts: narrowband_core::correlator::CoincidenceCounts,
    g2_raw: Option<narrowband_core::fit::Estimate>,
    g2_corrected: Option<narrowband_core::fit::Estimate>,
}

#[derive(Debug, Serialize)]
struct G2Output {
    herald: Channel,
    channels: [Channel; 2],
    sweep: Vec<G2Row>,
    provenance: Provenance,
}

pub fn cmd_g2(a: &G2Args) -> Result<()> {
    let stream = format::read_stream(&a.input)?;
    let mut prov = Provenance::new();
    prov.add_file("stream", &a.input)?;
    let (h, ca, cb) = (Channel(a.herald), Channel(a.a), Channel(a.b));
    let mut sweep = Vec::new();
    for &w_ns in &a.windows_ns {
        if !(w_ns > 0.0 && w_ns.is_finite()) {
            return Err(Error::config("windows_ns", "windows must be positive"));
        }
        let w = w_ns * 1e-9;
        let counts = heralded_counts(&stream, h, ca, cb, w)?;
        let d = 3.0 * w + report::ACCIDENTAL_GAP;
        let acc = heralded_counts_offset(&stream, h, ca, cb, w, (d, -d))?;
        sweep.push(G2Row {
            window_ns: w_ns,
            g2_raw: g2_zero(&counts).ok(),
            g2_corrected: g2_zero_corrected(&counts, &acc).ok(),
            counts,
            accidental_counts: acc,
        });
    }
    let out = G2Output {
        herald: h,
        channels: [ca, cb],
        sweep,
        provenance: prov,
    };
    write_json(a.output.as_deref(), &out)
}

pub fn cmd_report(a: &ReportArgs) -> Result<i32> {
    let mut prov = Provenance::new();
    let cfg = match &a.config {
        Some(p) => {
            prov.add_file("config", p)?;
            Some(Config::load(p)?)
        }
        None => None,
    };
    let input = a
        .input
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.run.as_ref()).and_then(|r| r.output.clone()))
        .ok_or_else(|| Error::config("input", "no stream given (use --input or run.output)"))?;
    prov.add_file("stream", &input)?;
    let stream: TimeTagStream = format::read_stream(&input).map_err(Error::in_stage("read"))?;
    let mut opts = cfg.as_ref().map_or_else(ReportOptions::default, ReportOptions::from_config);
    if let Some(p) = a.pump_power_mw {
        opts.pump_power = Some(p);
    }
    if let Some(n) = a.mc_runs {
        opts.mc_runs = n;
    }
    if let Some(t) = a.threads {
        opts.threads = t;
    }
    let rep = report::run_report(&stream, &opts, prov);
    write_json(a.output.as_deref(), &rep)?;
    for d in &rep.diagnostics {
        eprintln!("{} {}: {}", d.stage, d.status, d.message);
    }
    Ok(if rep.ok { EXIT_OK } else { EXIT_ERROR })
}
