use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::DetectorParams;
use crate::error::Result;
use crate::math;
use crate::rng::{stage_rng, Stage};
use crate::tags::{seconds_to_ps, Channel, TimeTag, TimeTagStream};
use crate::PS_PER_SECOND;

/// Efficiency and jitter for one tag already on the detector's channel.
#[inline]
pub(crate) fn detect_one<R: Rng + ?Sized>(
    t: &mut TimeTag,
    det: &DetectorParams,
    sigma_ps: f64,
    rng: &mut R,
) -> bool {
    if det.efficiency < 1.0 && rng.random::<f64>() >= det.efficiency {
        return false;
    }
    if sigma_ps > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        let shifted = t.time_ps as i64 + math::round(z * sigma_ps) as i64;
        if shifted < 0 {
            return false;
        }
        t.time_ps = shifted as u64;
    }
    true
}

/// Appends dark counts of channel `ch` uniformly within `[start, end)` ps.
pub(crate) fn dark_kernel<R: Rng + ?Sized>(
    tags: &mut Vec<TimeTag>,
    ch: Channel,
    dark_rate: f64,
    rng: &mut R,
    window: (u64, u64),
) {
    let (start, end) = window;
    if dark_rate > 0.0 && end > start {
        let mean = dark_rate * (end - start) as f64 / PS_PER_SECOND;
        let n = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0) as u64;
        tags.extend((0..n).map(|_| TimeTag::new(rng.random_range(start..end), ch)));
    }
}

/// Efficiency, jitter and dark counts for channel `ch` within `[start, end)` ps.
/// Output is unsorted.
pub(crate) fn detector_kernel<R: Rng + ?Sized>(
    tags: &mut Vec<TimeTag>,
    ch: Channel,
    det: &DetectorParams,
    rng: &mut R,
    dark_rng: &mut R,
    window: (u64, u64),
) {
    let sigma_ps = det.jitter_sigma() * PS_PER_SECOND;
    if det.efficiency < 1.0 || sigma_ps > 0.0 {
        tags.retain_mut(|t| t.channel != ch || detect_one(t, det, sigma_ps, rng));
    }
    dark_kernel(tags, ch, det.dark_rate, dark_rng, window);
}

/// Non-extending dead time per channel, applied to a time-ordered tag sequence.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    dead_ps: Vec<u64>,
    last: Vec<Option<u64>>,
    pub rejected: u64,
}

impl DeadTimeFilter {
    pub fn new(dead_times: &[(Channel, f64)]) -> Self {
        let mut dead_ps = vec![0; 256];
        for (ch, d) in dead_times {
            dead_ps[ch.0 as usize] = seconds_to_ps(*d);
        }
        DeadTimeFilter {
            dead_ps,
            last: vec![None; 256],
            rejected: 0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.dead_ps.iter().any(|&d| d > 0)
    }

    /// Whether a detection at `tag` registers; tags must arrive in time order.
    #[inline]
    pub fn accept(&mut self, tag: &TimeTag) -> bool {
        let i = tag.channel.0 as usize;
        let dead = self.dead_ps[i];
        if dead == 0 {
            return true;
        }
        match self.last[i] {
            Some(prev) if tag.time_ps - prev < dead => {
                self.rejected += 1;
                false
            }
            _ => {
                self.last[i] = Some(tag.time_ps);
                true
            }
        }
    }
}

/// Detector model on one channel of a complete stream.
pub fn apply_detector(
    stream: &TimeTagStream,
    ch: Channel,
    det: &DetectorParams,
    seed: u64,
) -> Result<TimeTagStream> {
    stream.require_channel(ch)?;
    det.validate()?;
    let mut rng = stage_rng(seed, Stage::Detector, ch.0, 0);
    let mut dark = stage_rng(seed, Stage::DarkCounts, ch.0, 0);
    let mut tags = stream.records.clone();
    detector_kernel(&mut tags, ch, det, &mut rng, &mut dark, (0, stream.duration_ps));
    tags.retain(|t| t.time_ps < stream.duration_ps);
    tags.sort_unstable();
    let mut filter = DeadTimeFilter::new(&[(ch, det.dead_time)]);
    tags.retain(|t| filter.accept(t));
    Ok(TimeTagStream {
        records: tags,
        ..stream.clone_header()
    })
}
