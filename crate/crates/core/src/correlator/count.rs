use alloc::vec::Vec;
use core::ops::Range;

use super::{bins_per_side, CoincidenceCounts, CorrelationHistogram};
use crate::error::{Error, Result};
use crate::math::div_floor;
use crate::tags::{seconds_to_ps, Channel, TimeTagStream};

fn positive_ps(name: &'static str, seconds: f64) -> Result<u64> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::invalid(name, "must be positive"));
    }
    let ps = seconds_to_ps(seconds);
    if ps == 0 {
        return Err(Error::invalid(name, "below the 1 ps resolution"));
    }
    Ok(ps)
}

/// Two-pointer delay histogram kernel over pre-extracted channel timestamps.
#[derive(Debug, Clone)]
pub struct CrossCorrelator {
    a: Vec<u64>,
    b: Vec<u64>,
    same_channel: bool,
    bin_width_ps: u64,
    max_delay_ps: u64,
    bins_per_side: u64,
}

impl CrossCorrelator {
    pub fn new(
        stream: &TimeTagStream,
        ch_a: Channel,
        ch_b: Channel,
        bin_width_ps: u64,
        max_delay_ps: u64,
    ) -> Result<Self> {
        stream.require_channel(ch_a)?;
        stream.require_channel(ch_b)?;
        stream.check_sorted()?;
        if bin_width_ps == 0 {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if max_delay_ps < bin_width_ps {
            return Err(Error::invalid("max_delay", "must be at least one bin width"));
        }
        let a = stream.channel_times(ch_a);
        let b = if ch_a == ch_b { a.clone() } else { stream.channel_times(ch_b) };
        Ok(CrossCorrelator {
            a,
            b,
            same_channel: ch_a == ch_b,
            bin_width_ps,
            max_delay_ps,
            bins_per_side: bins_per_side(bin_width_ps, max_delay_ps),
        })
    }

    /// Number of channel-a tags, i.e. the range accepted by [`Self::accumulate`].
    pub fn len_a(&self) -> usize {
        self.a.len()
    }

    pub fn len_b(&self) -> usize {
        self.b.len()
    }

    /// Adds all pairs whose channel-a tag lies in `range` to `counts`.
    pub fn accumulate(&self, range: Range<usize>, counts: &mut [u64]) {
        let m = self.max_delay_ps;
        let bw = self.bin_width_ps as i64;
        let k = self.bins_per_side as i64;
        let b = &self.b;
        let Some(&first) = self.a.get(range.start) else {
            return;
        };
        let mut lo = b.partition_point(|&t| t.saturating_add(m) < first);
        for i in range {
            let t = self.a[i];
            while lo < b.len() && b[lo].saturating_add(m) < t {
                lo += 1;
            }
            let hi = t.saturating_add(m);
            let mut j = lo;
            while j < b.len() && b[j] <= hi {
                if !(self.same_channel && j == i) {
                    let d = b[j] as i64 - t as i64;
                    counts[(div_floor(d, bw) + k) as usize] += 1;
                }
                j += 1;
            }
        }
    }
}

fn empty_histogram(
    stream: &TimeTagStream,
    ch_a: Channel,
    ch_b: Channel,
    bin_width_ps: u64,
    max_delay_ps: u64,
) -> Result<CorrelationHistogram> {
    let mut h = CorrelationHistogram::new(ch_a, ch_b, bin_width_ps, max_delay_ps)?;
    h.live_time = stream.live_time;
    h.singles = [stream.count(ch_a) as u64, stream.count(ch_b) as u64];
    Ok(h)
}

/// Histogram of `t_b - t_a` over all pairs with `|t_b - t_a| ≤ max_delay`.
///
/// An empty channel yields an all-zero histogram.
pub fn cross_correlation(
    stream: &TimeTagStream,
    ch_a: Channel,
    ch_b: Channel,
    bin_width: f64,
    max_delay: f64,
) -> Result<CorrelationHistogram> {
    cross_correlation_chunked(stream, ch_a, ch_b, bin_width, max_delay, usize::MAX)
}

/// [`cross_correlation`] processing channel-a tags in chunks of `chunk` tags.
/// The result does not depend on `chunk`.
pub fn cross_correlation_chunked(
    stream: &TimeTagStream,
    ch_a: Channel,
    ch_b: Channel,
    bin_width: f64,
    max_delay: f64,
    chunk: usize,
) -> Result<CorrelationHistogram> {
    let bw = positive_ps("bin_width", bin_width)?;
    let m = positive_ps("max_delay", max_delay)?;
    let corr = CrossCorrelator::new(stream, ch_a, ch_b, bw, m)?;
    let mut h = empty_histogram(stream, ch_a, ch_b, bw, m)?;
    let chunk = chunk.max(1);
    let mut start = 0;
    while start < corr.len_a() {
        let end = start.saturating_add(chunk).min(corr.len_a());
        corr.accumulate(start..end, &mut h.counts);
        start = end;
    }
    Ok(h)
}

fn heralded_impl(
    stream: &TimeTagStream,
    herald: Channel,
    ch_a: Channel,
    ch_b: Channel,
    window: f64,
    offsets_ps: (i64, i64),
) -> Result<CoincidenceCounts> {
    for ch in [herald, ch_a, ch_b] {
        stream.require_channel(ch)?;
    }
    if herald == ch_a || herald == ch_b || ch_a == ch_b {
        return Err(Error::invalid("channels", "herald, a and b must differ"));
    }
    let w = positive_ps("window", window)? as i128;
    stream.check_sorted()?;
    let hs = stream.channel_times(herald);
    let a = stream.channel_times(ch_a);
    let b = stream.channel_times(ch_b);
    let (mut pa, mut pb) = (0usize, 0usize);
    // Tag t is inside the window around centre c when 2|t - c| ≤ w.
    let hit = |times: &[u64], p: &mut usize, c2: i128| -> bool {
        while *p < times.len() && 2 * times[*p] as i128 + w < c2 {
            *p += 1;
        }
        *p < times.len() && 2 * times[*p] as i128 <= c2 + w
    };
    let mut counts = CoincidenceCounts {
        c_h: hs.len() as u64,
        window,
        live_time: stream.live_time,
        ..CoincidenceCounts::default()
    };
    for &t in &hs {
        let in_a = hit(&a, &mut pa, 2 * (t as i128 + offsets_ps.0 as i128));
        let in_b = hit(&b, &mut pb, 2 * (t as i128 + offsets_ps.1 as i128));
        counts.cc_ha += in_a as u64;
        counts.cc_hb += in_b as u64;
        counts.cc_hab += (in_a && in_b) as u64;
    }
    Ok(counts)
}

/// Herald counts and herald-conditioned coincidences with channels a and b, each
/// within `±window/2` of the herald.
pub fn heralded_counts(
    stream: &TimeTagStream,
    herald: Channel,
    ch_a: Channel,
    ch_b: Channel,
    window: f64,
) -> Result<CoincidenceCounts> {
    heralded_impl(stream, herald, ch_a, ch_b, window, (0, 0))
}

/// As [`heralded_counts`] with the a and b windows centred at `herald + offset`.
/// Offsets far beyond the correlation time measure accidental coincidences.
pub fn heralded_counts_offset(
    stream: &TimeTagStream,
    herald: Channel,
    ch_a: Channel,
    ch_b: Channel,
    window: f64,
    offsets: (f64, f64),
) -> Result<CoincidenceCounts> {
    let to_ps = |s: f64| crate::math::round(s * crate::PS_PER_SECOND) as i64;
    heralded_impl(stream, herald, ch_a, ch_b, window, (to_ps(offsets.0), to_ps(offsets.1)))
}
