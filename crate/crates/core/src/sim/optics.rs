use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stage_rng, Stage};
use crate::tags::{seconds_to_ps, Channel, TimeTag, TimeTagStream};

pub(crate) fn loss_kernel<R: Rng + ?Sized>(
    tags: &mut Vec<TimeTag>,
    ch: Channel,
    transmission: f64,
    rng: &mut R,
) {
    if transmission >= 1.0 {
        return;
    }
    tags.retain(|t| t.channel != ch || rng.random::<f64>() < transmission);
}

pub(crate) fn splitter_kernel<R: Rng + ?Sized>(
    tags: &mut [TimeTag],
    input: Channel,
    ratio: f64,
    outputs: [Channel; 2],
    rng: &mut R,
) {
    for t in tags.iter_mut().filter(|t| t.channel == input) {
        t.channel = if rng.random::<f64>() < ratio {
            outputs[0]
        } else {
            outputs[1]
        };
    }
}

fn check_fraction(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, "must lie in [0, 1]"))
    }
}

/// Removes each tag of `ch` independently with probability `1 - transmission`.
pub fn apply_loss(
    stream: &TimeTagStream,
    ch: Channel,
    transmission: f64,
    seed: u64,
) -> Result<TimeTagStream> {
    stream.require_channel(ch)?;
    check_fraction("transmission", transmission)?;
    let mut out = stream.clone();
    let mut rng = stage_rng(seed, Stage::Loss, ch.0, 0);
    loss_kernel(&mut out.records, ch, transmission, &mut rng);
    Ok(out)
}

/// Routes each tag of `input` to `outputs[0]` with probability `ratio`, else to
/// `outputs[1]`.
pub fn apply_splitter(
    stream: &TimeTagStream,
    input: Channel,
    ratio: f64,
    outputs: [(Channel, &str); 2],
    seed: u64,
) -> Result<TimeTagStream> {
    stream.require_channel(input)?;
    check_fraction("ratio", ratio)?;
    if outputs[0].0 == outputs[1].0 {
        return Err(Error::invalid("outputs", "splitter outputs must differ"));
    }
    for (ch, _) in &outputs {
        if *ch != input && stream.has_channel(*ch) {
            return Err(Error::invalid("outputs", "splitter output channel already in use"));
        }
    }
    let mut out = stream.clone();
    let mut rng = stage_rng(seed, Stage::Splitter, input.0, 0);
    splitter_kernel(&mut out.records, input, ratio, [outputs[0].0, outputs[1].0], &mut rng);
    out.records.sort_unstable();
    out.channels.retain(|c| c.id != input);
    for (ch, label) in &outputs {
        out.declare_channel(*ch, label);
    }
    Ok(out)
}

/// Periodic measurement gate: open during the first `open_fraction` of every period.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShutterParams {
    /// Seconds.
    pub period: f64,
    pub open_fraction: f64,
}

impl ShutterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) || seconds_to_ps(self.period) == 0 {
            return Err(Error::invalid("period", "must be positive"));
        }
        check_fraction("open_fraction", self.open_fraction)
    }

    fn period_ps(&self) -> u64 {
        seconds_to_ps(self.period)
    }

    fn open_ps(&self) -> u64 {
        crate::math::round(self.open_fraction * self.period_ps() as f64) as u64
    }

    #[inline]
    pub fn is_open(&self, time_ps: u64) -> bool {
        time_ps % self.period_ps() < self.open_ps()
    }

    /// Total open time within `[0, duration_ps)`, in ps.
    pub fn open_time_ps(&self, duration_ps: u64) -> u64 {
        let p = self.period_ps();
        let o = self.open_ps();
        (duration_ps / p) * o + (duration_ps % p).min(o)
    }
}

/// Drops tags arriving while the shutter is closed and scales the live time.
pub fn apply_shutter(stream: &TimeTagStream, shutter: &ShutterParams) -> Result<TimeTagStream> {
    shutter.validate()?;
    let mut out = stream.clone();
    out.records.retain(|t| shutter.is_open(t.time_ps));
    if stream.duration_ps > 0 {
        out.live_time *= shutter.open_time_ps(stream.duration_ps) as f64 / stream.duration_ps as f64;
    }
    Ok(out)
}
