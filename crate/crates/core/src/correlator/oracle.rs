//! Quadratic reference counters. They restate each counting rule over all tag
//! pairs with no pointer bookkeeping and serve as ground truth on small streams.

use super::{CoincidenceCounts, CorrelationHistogram};
use crate::error::Result;
use crate::math::div_floor;
use crate::tags::{seconds_to_ps, Channel, TimeTagStream};

pub fn cross_correlation(
    stream: &TimeTagStream,
    ch_a: Channel,
    ch_b: Channel,
    bin_width: f64,
    max_delay: f64,
) -> Result<CorrelationHistogram> {
    let bw = seconds_to_ps(bin_width);
    let m = seconds_to_ps(max_delay) as i64;
    let mut h = CorrelationHistogram::new(ch_a, ch_b, bw, m as u64)?;
    h.live_time = stream.live_time;
    h.singles = [stream.count(ch_a) as u64, stream.count(ch_b) as u64];
    let k = h.bins_per_side() as i64;
    for (i, p) in stream.records.iter().enumerate() {
        if p.channel != ch_a {
            continue;
        }
        for (j, q) in stream.records.iter().enumerate() {
            if q.channel != ch_b || i == j {
                continue;
            }
            let d = q.time_ps as i64 - p.time_ps as i64;
            if d.abs() <= m {
                h.counts[(div_floor(d, bw as i64) + k) as usize] += 1;
            }
        }
    }
    Ok(h)
}

pub fn heralded_counts(
    stream: &TimeTagStream,
    herald: Channel,
    ch_a: Channel,
    ch_b: Channel,
    window: f64,
) -> CoincidenceCounts {
    let w = seconds_to_ps(window) as i128;
    let near = |t: u64, ch: Channel| {
        stream
            .records
            .iter()
            .any(|q| q.channel == ch && 2 * (q.time_ps as i128 - t as i128).abs() <= w)
    };
    let mut c = CoincidenceCounts {
        window,
        live_time: stream.live_time,
        ..CoincidenceCounts::default()
    };
    for p in stream.records.iter().filter(|p| p.channel == herald) {
        let a = near(p.time_ps, ch_a);
        let b = near(p.time_ps, ch_b);
        c.c_h += 1;
        c.cc_ha += a as u64;
        c.cc_hb += b as u64;
        c.cc_hab += (a && b) as u64;
    }
    c
}

pub fn fourfold_count(stream: &TimeTagStream, channels: [Channel; 4], window: f64) -> u64 {
    let w = seconds_to_ps(window);
    let mut n = 0;
    for e in stream.records.iter().filter(|e| channels.contains(&e.channel)) {
        let all = channels.iter().filter(|&&c| c != e.channel).all(|&c| {
            stream
                .records
                .iter()
                .any(|q| q.channel == c && q > e && q.time_ps <= e.time_ps + w)
        });
        n += all as u64;
    }
    n
}
