//! Multi-threaded drivers. Output is identical for every thread count: segments
//! are generated independently and assembled in index order, and histogram
//! partitions are summed as integers.

use std::num::NonZeroUsize;

use narrowband_core::correlator::{CorrelationHistogram, CrossCorrelator};
use narrowband_core::sim::{RunStats, Scenario, SegmentOutput};
use narrowband_core::tags::{seconds_to_ps, Channel, TimeTag, TimeTagStream};

use crate::error::{Error, Result};

/// Resolves a requested thread count; 0 means all available cores.
pub fn thread_count(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(1, NonZeroUsize::get)
    }
}

/// Runs a scenario on `threads` workers, handing time-ordered tags to `sink`.
pub fn simulate_with<F: FnMut(&[TimeTag])>(scenario: &Scenario, threads: usize, mut sink: F) -> Result<RunStats> {
    let threads = thread_count(threads);
    if threads == 1 {
        return Ok(scenario.run(sink)?);
    }
    scenario.validate()?;
    let total = scenario.segment_count();
    let mut asm = scenario.assembler();
    let mut next = 0u64;
    while next < total {
        let batch = (threads as u64).min(total - next);
        let mut outputs: Vec<SegmentOutput> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..batch)
                .map(|k| s.spawn(move || scenario.process_segment(next + k)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("segment worker panicked"))
                .collect()
        });
        outputs.sort_by_key(|o| o.index);
        for seg in outputs {
            asm.push(seg, &mut sink)?;
        }
        next += batch;
    }
    Ok(asm.finish(&mut sink))
}

/// Runs a scenario into memory.
pub fn simulate(scenario: &Scenario, threads: usize) -> Result<(TimeTagStream, RunStats)> {
    let mut stream = scenario.stream_header()?;
    let mut records = Vec::new();
    let stats = simulate_with(scenario, threads, |c| records.extend_from_slice(c))?;
    stream.records = records;
    Ok((stream, stats))
}

/// Cross-correlation histogram with channel-a tags split across threads.
pub fn cross_correlation(
    stream: &TimeTagStream,
    ch_a: Channel,
    ch_b: Channel,
    bin_width: f64,
    max_delay: f64,
    threads: usize,
) -> Result<CorrelationHistogram> {
    for (name, v) in [("bin_width", bin_width), ("max_delay", max_delay)] {
        if !(v > 0.0 && v.is_finite()) || seconds_to_ps(v) == 0 {
            return Err(Error::config(name, "must be at least 1 ps"));
        }
    }
    let bw = seconds_to_ps(bin_width);
    let m = seconds_to_ps(max_delay);
    let corr = CrossCorrelator::new(stream, ch_a, ch_b, bw, m)?;
    let mut h = CorrelationHistogram::new(ch_a, ch_b, bw, m)?;
    h.live_time = stream.live_time;
    h.singles = [stream.count(ch_a) as u64, stream.count(ch_b) as u64];
    let n = corr.len_a();
    let threads = thread_count(threads).clamp(1, n.max(1));
    if threads == 1 {
        corr.accumulate(0..n, &mut h.counts);
        return Ok(h);
    }
    let len = h.counts.len();
    let parts: Vec<Vec<u64>> = std::thread::scope(|s| {
        let corr = &corr;
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let range = (n * t / threads)..(n * (t + 1) / threads);
                s.spawn(move || {
                    let mut counts = vec![0u64; len];
                    corr.accumulate(range, &mut counts);
                    counts
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("correlation worker panicked"))
            .collect()
    });
    for p in parts {
        for (c, x) in h.counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(h)
}
