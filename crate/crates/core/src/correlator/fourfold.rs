use alloc::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tags::{seconds_to_ps, Channel, TimeTag, TimeTagStream};

/// Streaming four-fold coincidence counter.
///
/// An anchor is any tag on one of the four channels such that each of the other
/// three channels has a tag after it (in `(time, channel)` order) no later than
/// `anchor + window`. Every such anchor counts one event.
#[derive(Debug, Clone)]
pub struct FourfoldCounter {
    channels: [Channel; 4],
    window_ps: u64,
    buf: VecDeque<TimeTag>,
    last: Option<TimeTag>,
    seen: u64,
    count: u64,
}

impl FourfoldCounter {
    pub fn new(channels: [Channel; 4], window: f64) -> Result<Self> {
        for i in 0..4 {
            for j in 0..i {
                if channels[i] == channels[j] {
                    return Err(Error::invalid("channels", "four distinct channels required"));
                }
            }
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::invalid("window", "must be positive"));
        }
        Ok(FourfoldCounter {
            channels,
            window_ps: seconds_to_ps(window),
            buf: VecDeque::new(),
            last: None,
            seen: 0,
            count: 0,
        })
    }

    #[inline]
    fn slot(&self, ch: Channel) -> Option<usize> {
        self.channels.iter().position(|&c| c == ch)
    }

    fn evaluate_front(&mut self) {
        let Some(anchor) = self.buf.front().copied() else {
            return;
        };
        let limit = anchor.time_ps.saturating_add(self.window_ps);
        let mut mask = 1u8 << self.slot(anchor.channel).unwrap_or(0);
        for t in self.buf.iter().skip(1) {
            if t.time_ps > limit {
                break;
            }
            if let Some(s) = self.slot(t.channel) {
                mask |= 1 << s;
            }
            if mask == 0b1111 {
                self.count += 1;
                break;
            }
        }
        self.buf.pop_front();
    }

    /// Feeds the next tags of a time-ordered stream; other channels are ignored.
    pub fn push(&mut self, tags: &[TimeTag]) -> Result<()> {
        for t in tags {
            if let Some(prev) = self.last {
                if *t < prev {
                    return Err(Error::UnsortedInput(self.seen as usize));
                }
            }
            self.last = Some(*t);
            self.seen += 1;
            if self.slot(t.channel).is_none() {
                continue;
            }
            while let Some(front) = self.buf.front() {
                if front.time_ps.saturating_add(self.window_ps) < t.time_ps {
                    self.evaluate_front();
                } else {
                    break;
                }
            }
            self.buf.push_back(*t);
        }
        Ok(())
    }

    /// Events counted so far, including anchors still waiting for data.
    pub fn finish(mut self) -> u64 {
        while !self.buf.is_empty() {
            self.evaluate_front();
        }
        self.count
    }
}

/// Number of four-fold events in a stream.
pub fn fourfold_count(stream: &TimeTagStream, channels: [Channel; 4], window: f64) -> Result<u64> {
    for ch in channels {
        stream.require_channel(ch)?;
    }
    let mut c = FourfoldCounter::new(channels, window)?;
    c.push(&stream.records)?;
    Ok(c.finish())
}

/// Four-fold events per second of live time.
pub fn fourfold_rate(stream: &TimeTagStream, channels: [Channel; 4], window: f64) -> Result<f64> {
    let n = fourfold_count(stream, channels, window)?;
    if !(stream.live_time > 0.0) {
        return Err(Error::DivisionByZero("live time"));
    }
    Ok(n as f64 / stream.live_time)
}
