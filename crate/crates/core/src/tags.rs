//! Time-tag records and streams, the common currency of the simulator, the
//! correlator and the file formats.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;
use crate::PS_PER_SECOND;

/// 8-bit detector channel id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Channel(pub u8);

impl Channel {
    pub const SIGNAL: Channel = Channel(0);
    pub const IDLER: Channel = Channel(1);
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

/// One detection: timestamp in picoseconds and channel. Ordered by time, then channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub time_ps: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub const fn new(time_ps: u64, channel: Channel) -> Self {
        TimeTag { time_ps, channel }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelInfo {
    pub id: Channel,
    pub label: String,
}

/// Time-ordered detection records with their acquisition metadata.
///
/// Invariants: records sorted by `(time_ps, channel)`, every `time_ps <
/// duration_ps`, every channel declared in `channels`. [`TimeTagStream::validate`]
/// checks them; correlator entry points re-check ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagStream {
    pub records: Vec<TimeTag>,
    /// Timestamp resolution in picoseconds.
    pub resolution_ps: u16,
    pub duration_ps: u64,
    /// Seconds during which detectors were exposed (shutter open).
    pub live_time: f64,
    pub channels: Vec<ChannelInfo>,
}

pub fn seconds_to_ps(seconds: f64) -> u64 {
    math::round(seconds * PS_PER_SECOND) as u64
}

impl TimeTagStream {
    pub fn empty(duration: f64, channels: &[(Channel, &str)]) -> Self {
        let duration_ps = seconds_to_ps(duration);
        TimeTagStream {
            records: Vec::new(),
            resolution_ps: 1,
            duration_ps,
            live_time: duration_ps as f64 / PS_PER_SECOND,
            channels: channels
                .iter()
                .map(|(id, label)| ChannelInfo {
                    id: *id,
                    label: label.to_string(),
                })
                .collect(),
        }
    }

    /// Builds a stream from arbitrary records: sorts them and drops anything at or
    /// past the end of the acquisition.
    pub fn from_records(
        mut records: Vec<TimeTag>,
        duration: f64,
        channels: &[(Channel, &str)],
    ) -> Self {
        let mut s = Self::empty(duration, channels);
        records.retain(|t| t.time_ps < s.duration_ps);
        records.sort_unstable();
        s.records = records;
        s
    }

    /// Copy of the metadata with no records.
    pub fn clone_header(&self) -> Self {
        TimeTagStream {
            records: Vec::new(),
            resolution_ps: self.resolution_ps,
            duration_ps: self.duration_ps,
            live_time: self.live_time,
            channels: self.channels.clone(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration_ps as f64 / PS_PER_SECOND
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_channel(&self, ch: Channel) -> bool {
        self.channels.iter().any(|c| c.id == ch)
    }

    pub fn require_channel(&self, ch: Channel) -> Result<()> {
        if self.has_channel(ch) {
            Ok(())
        } else {
            Err(Error::UnknownChannel(ch.0))
        }
    }

    pub fn declare_channel(&mut self, ch: Channel, label: &str) {
        if !self.has_channel(ch) {
            self.channels.push(ChannelInfo {
                id: ch,
                label: label.to_string(),
            });
            self.channels.sort_by_key(|c| c.id);
        }
    }

    pub fn label(&self, ch: Channel) -> Option<&str> {
        self.channels
            .iter()
            .find(|c| c.id == ch)
            .map(|c| c.label.as_str())
    }

    pub fn check_sorted(&self) -> Result<()> {
        check_sorted(&self.records)
    }

    pub fn validate(&self) -> Result<()> {
        self.check_sorted()?;
        if let Some(last) = self.records.last() {
            if last.time_ps >= self.duration_ps {
                return Err(Error::invalid("records", "timestamp at or beyond duration"));
            }
        }
        for t in &self.records {
            if !self.has_channel(t.channel) {
                return Err(Error::UnknownChannel(t.channel.0));
            }
        }
        Ok(())
    }

    pub fn count(&self, ch: Channel) -> usize {
        self.records.iter().filter(|t| t.channel == ch).count()
    }

    /// Timestamps of one channel, in order.
    pub fn channel_times(&self, ch: Channel) -> Vec<u64> {
        self.records
            .iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.time_ps)
            .collect()
    }

    /// Detected rate of one channel per second of live time.
    pub fn singles_rate(&self, ch: Channel) -> f64 {
        if self.live_time > 0.0 {
            self.count(ch) as f64 / self.live_time
        } else {
            0.0
        }
    }
}

pub fn check_sorted(records: &[TimeTag]) -> Result<()> {
    match records.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(Error::UnsortedInput(i + 1)),
        None => Ok(()),
    }
}

/// Timestamps of one channel from a sorted record slice.
pub fn times_of(records: &[TimeTag], ch: Channel) -> Vec<u64> {
    records
        .iter()
        .filter(|t| t.channel == ch)
        .map(|t| t.time_ps)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn from_records_sorts_and_truncates() {
        let s = TimeTagStream::from_records(
            vec![
                TimeTag::new(30, Channel(1)),
                TimeTag::new(10, Channel(0)),
                TimeTag::new(10, Channel(1)),
                TimeTag::new(2_000_000, Channel(0)),
            ],
            1e-6,
            &[(Channel(0), "a"), (Channel(1), "b")],
        );
        assert_eq!(s.len(), 3);
        assert_eq!(s.records[0], TimeTag::new(10, Channel(0)));
        assert_eq!(s.records[1], TimeTag::new(10, Channel(1)));
        s.validate().unwrap();
        assert_eq!(s.channel_times(Channel(1)), vec![10, 30]);
    }

    #[test]
    fn validation_catches_violations() {
        let mut s = TimeTagStream::empty(1e-6, &[(Channel(0), "a")]);
        s.records = vec![TimeTag::new(5, Channel(0)), TimeTag::new(4, Channel(0))];
        assert_eq!(s.validate(), Err(Error::UnsortedInput(1)));
        s.records = vec![TimeTag::new(5, Channel(3))];
        assert_eq!(s.validate(), Err(Error::UnknownChannel(3)));
        s.records = vec![TimeTag::new(1_000_000, Channel(0))];
        assert!(s.validate().is_err());
    }
}
