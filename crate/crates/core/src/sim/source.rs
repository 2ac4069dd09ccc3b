use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{SourceParams, SEGMENT_SECONDS};
use crate::error::Result;
use crate::math;
use crate::rng::{stage_rng, Stage};
use crate::tags::{seconds_to_ps, Channel, TimeTag, TimeTagStream};
use crate::PS_PER_SECOND;

/// Beyond this many decay times the field is treated as renewed; the residual
/// intensity correlation `e^{-2x}(1+x)²` is below 3e-7.
const FRESH_STATE_X: f64 = 10.0;
/// Below this the noise covariance comes from its Taylor series.
const SERIES_X: f64 = 0.02;

/// Cross-correlation FWHM of the two-sided exponential delay law.
pub fn pair_delay_fwhm(gamma_s: f64, gamma_i: f64) -> f64 {
    core::f64::consts::LN_2 / (2.0 * gamma_s) + core::f64::consts::LN_2 / (2.0 * gamma_i)
}

/// Complex Gaussian field with amplitude correlation `e^{-Γτ}(1 + Γτ)`, obtained
/// by feeding one Ornstein-Uhlenbeck process into another with the same rate.
///
/// Each quadrature carries a pair `(a, b)` with stationary covariance
/// `[[1, 1], [1, 2]]`; `b` drives `a`. The normalized intensity `|a|²/2` has unit
/// mean and an exponential law, and `<I(t)I(t+τ)> = 1 + e^{-2Γτ}(1 + Γτ)²`.
/// Transitions are sampled exactly for any step.
#[derive(Debug, Clone)]
pub struct FieldProcess {
    a: [f64; 2],
    b: [f64; 2],
    /// `b` is only materialized when a short step needs it.
    b_valid: bool,
}

struct StepCovariance {
    rho: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

fn step_covariance(x: f64) -> StepCovariance {
    let rho = math::exp(-x);
    let (s11, s12, s22) = if x < SERIES_X {
        let x2 = x * x;
        let x3 = x2 * x;
        let s11 = x3
            * (4.0 / 3.0
                + x * (-2.0
                    + x * (8.0 / 5.0
                        + x * (-8.0 / 9.0
                            + x * (8.0 / 21.0 + x * (-2.0 / 15.0 + x * (16.0 / 405.0)))))));
        let s12 = x2
            * (2.0
                + x * (-8.0 / 3.0
                    + x * (2.0
                        + x * (-16.0 / 15.0
                            + x * (4.0 / 9.0
                                + x * (-16.0 / 105.0 + x * (2.0 / 45.0 + x * (-32.0 / 2835.0))))))));
        let s22 = x
            * (4.0
                + x * (-4.0
                    + x * (8.0 / 3.0
                        + x * (-4.0 / 3.0
                            + x * (8.0 / 15.0
                                + x * (-8.0 / 45.0
                                    + x * (16.0 / 315.0
                                        + x * (-4.0 / 315.0 + x * (8.0 / 2835.0)))))))));
        (s11, s12, s22)
    } else {
        let r2 = rho * rho;
        (
            1.0 - r2 * (1.0 + 2.0 * x + 2.0 * x * x),
            1.0 - r2 * (1.0 + 2.0 * x),
            2.0 * (1.0 - r2),
        )
    };
    let l11 = math::sqrt(s11);
    let l21 = if l11 > 0.0 { s12 / l11 } else { 0.0 };
    let l22 = math::sqrt((s22 - l21 * l21).max(0.0));
    StepCovariance { rho, l11, l21, l22 }
}

impl FieldProcess {
    pub fn stationary<R: Rng + ?Sized>(rng: &mut R) -> Self {
        FieldProcess {
            a: [rng.sample(StandardNormal), rng.sample(StandardNormal)],
            b: [0.0; 2],
            b_valid: false,
        }
    }

    /// Normalized intensity, unit mean.
    #[inline]
    pub fn intensity(&self) -> f64 {
        0.5 * (self.a[0] * self.a[0] + self.a[1] * self.a[1])
    }

    /// Advances the field by `x` decay times (`x = Γ Δt`).
    pub fn advance<R: Rng + ?Sized>(&mut self, x: f64, rng: &mut R) {
        if x >= FRESH_STATE_X {
            *self = Self::stationary(rng);
            return;
        }
        if x <= 0.0 {
            return;
        }
        if !self.b_valid {
            for q in 0..2 {
                let z: f64 = rng.sample(StandardNormal);
                self.b[q] = self.a[q] + z;
            }
            self.b_valid = true;
        }
        let c = step_covariance(x);
        for q in 0..2 {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let (a, b) = (self.a[q], self.b[q]);
            self.a[q] = c.rho * (a + x * b) + c.l11 * z1;
            self.b[q] = c.rho * b + c.l21 * z1 + c.l22 * z2;
        }
    }
}

/// How pair emission times are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SourceEngine {
    /// Doubly stochastic Poisson process driven by [`FieldProcess`], generated by
    /// thinning. Cost grows as `(pair_rate · bound)² / Γ` per simulated second.
    #[default]
    Cox,
    /// Poisson singles plus bunched doublets whose separation follows
    /// `e^{-2Γ|τ|}(1 + Γ|τ|)²`. Same rate and pair-correlation function as
    /// [`SourceEngine::Cox`]; third and higher orders are not bunched. Cost is
    /// linear in the pair rate.
    PairCluster,
}

/// `∫ [e^{-Γ|τ|}(1 + Γ|τ|)]² dτ` in units of `1/Γ`.
pub(crate) const BUNCHING_AREA: f64 = 2.5;

/// Bookkeeping of the generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceStats {
    /// Thinning candidates (cox) or emission events (pair-cluster).
    pub candidates: u64,
    pub pairs: u64,
    /// Field-simulated candidates whose intensity exceeded the thinning bound.
    pub clipped: u64,
}

impl SourceStats {
    pub fn add(&mut self, other: &SourceStats) {
        self.candidates += other.candidates;
        self.pairs += other.pairs;
        self.clipped += other.clipped;
    }
}

struct PairEmitter {
    p_late_idler: f64,
    inv_2gs: f64,
    inv_2gi: f64,
}

impl PairEmitter {
    fn new(params: &SourceParams) -> Self {
        PairEmitter {
            p_late_idler: params.gamma_i / (params.gamma_s + params.gamma_i),
            inv_2gs: 0.5 / params.gamma_s,
            inv_2gi: 0.5 / params.gamma_i,
        }
    }

    #[inline]
    fn emit<R: Rng + ?Sized>(&self, emit_ps: i64, rng: &mut R, out: &mut Vec<TimeTag>) {
        let e: f64 = rng.sample(Exp1);
        let delay = if rng.random::<f64>() < self.p_late_idler {
            e * self.inv_2gs
        } else {
            -e * self.inv_2gi
        };
        let idler = emit_ps + math::round(delay * PS_PER_SECOND) as i64;
        if emit_ps >= 0 {
            out.push(TimeTag::new(emit_ps as u64, Channel::SIGNAL));
        }
        if idler >= 0 {
            out.push(TimeTag::new(idler as u64, Channel::IDLER));
        }
    }
}

/// Thinning of a rate `rate · bound` candidate stream against `rate · I(t)`.
/// A candidate separated from both neighbours by more than [`FRESH_STATE_X`] decay
/// times sees an independent stationary intensity, so it is accepted with the
/// closed-form probability `E[min(I, B)]/B` without touching the field.
fn cox_interval<R: Rng + ?Sized>(
    rate: f64,
    params: &SourceParams,
    start_ps: u64,
    length: f64,
    rng: &mut R,
    out: &mut Vec<TimeTag>,
    stats: &mut SourceStats,
) {
    let bound = params.intensity_bound;
    let candidate_rate = rate * bound;
    if candidate_rate <= 0.0 || length <= 0.0 {
        return;
    }
    let gamma = params.field_decay_rate();
    let emitter = PairEmitter::new(params);
    let p_isolated = -math::expm1(-bound) / bound;
    let mut field = FieldProcess::stationary(rng);
    let mut field_live = false;
    let mut t = 0.0;
    let mut gap: f64 = rng.sample::<f64, _>(Exp1) / candidate_rate;
    let mut prev_far = true;
    loop {
        t += gap;
        if t >= length {
            break;
        }
        stats.candidates += 1;
        let x_prev = gamma * gap;
        gap = rng.sample::<f64, _>(Exp1) / candidate_rate;
        let far_prev = prev_far || x_prev >= FRESH_STATE_X;
        let far_next = gamma * gap >= FRESH_STATE_X;
        prev_far = false;
        let accept = if far_prev && far_next {
            field_live = false;
            rng.random::<f64>() < p_isolated
        } else {
            if far_prev || !field_live {
                field = FieldProcess::stationary(rng);
                field_live = true;
            } else {
                field.advance(x_prev, rng);
            }
            let z = field.intensity();
            if z > bound {
                stats.clipped += 1;
            }
            rng.random::<f64>() * bound < z
        };
        if accept {
            stats.pairs += 1;
            let emit = start_ps as i64 + math::round(t * PS_PER_SECOND) as i64;
            emitter.emit(emit, rng, out);
        }
    }
}

fn cluster_interval<R: Rng + ?Sized>(
    rate: f64,
    params: &SourceParams,
    start_ps: u64,
    length: f64,
    rng: &mut R,
    out: &mut Vec<TimeTag>,
    stats: &mut SourceStats,
) {
    if rate <= 0.0 || length <= 0.0 {
        return;
    }
    let gamma = params.field_decay_rate();
    let doublet_rate = rate * rate * 0.5 * BUNCHING_AREA / gamma;
    let event_rate = rate - doublet_rate;
    let p_doublet = doublet_rate / event_rate;
    let emitter = PairEmitter::new(params);
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / event_rate;
        if t >= length {
            break;
        }
        stats.candidates += 1;
        let emit = start_ps as i64 + math::round(t * PS_PER_SECOND) as i64;
        stats.pairs += 1;
        emitter.emit(emit, rng, out);
        if rng.random::<f64>() < p_doublet {
            // Separation law e^{-y}(1 + y + y²/4), y = 2Γ|τ|: a 2:2:1 mixture of
            // Gamma(1), Gamma(2) and Gamma(3).
            let u: f64 = rng.random();
            let k = if u < 0.4 {
                1
            } else if u < 0.8 {
                2
            } else {
                3
            };
            let mut y = 0.0;
            for _ in 0..k {
                y += rng.sample::<f64, _>(Exp1);
            }
            let tau = y / (2.0 * gamma);
            let signed = if rng.random::<bool>() { tau } else { -tau };
            stats.pairs += 1;
            emitter.emit(emit + math::round(signed * PS_PER_SECOND) as i64, rng, out);
        }
    }
}

/// Source photons emitted within `intervals` (absolute ps, inside segment
/// `segment`), in generation order. Photons may fall outside the intervals.
pub(crate) fn source_segment(
    params: &SourceParams,
    seed: u64,
    segment: u64,
    intervals: &[(u64, u64)],
    out: &mut Vec<TimeTag>,
) -> SourceStats {
    let total_weight: f64 = params.modes.iter().map(|m| m.relative_weight).sum();
    let mut stats = SourceStats::default();
    for (k, mode) in params.modes.iter().enumerate() {
        let rate = params.pair_rate * mode.relative_weight / total_weight;
        let mut rng = stage_rng(seed, Stage::Source, k as u8, segment);
        for &(a, b) in intervals {
            let length = b.saturating_sub(a) as f64 / PS_PER_SECOND;
            match params.engine {
                SourceEngine::Cox => cox_interval(rate, params, a, length, &mut rng, out, &mut stats),
                SourceEngine::PairCluster => {
                    cluster_interval(rate, params, a, length, &mut rng, out, &mut stats)
                }
            }
        }
    }
    stats
}

pub(crate) fn segment_bounds(segment: u64, duration_ps: u64) -> (u64, u64) {
    let seg_ps = seconds_to_ps(SEGMENT_SECONDS);
    let start = segment * seg_ps;
    (start, (start + seg_ps).min(duration_ps))
}

/// Signal (channel 0) and idler (channel 1) photons at the source output.
pub fn generate_pair_stream(
    params: &SourceParams,
    duration: f64,
    seed: u64,
) -> Result<(TimeTagStream, SourceStats)> {
    params.validate()?;
    if params.modes.len() > 256 {
        return Err(crate::Error::invalid("modes", "at most 256 modes"));
    }
    let mut stream = TimeTagStream::empty(
        duration,
        &[(Channel::SIGNAL, "signal"), (Channel::IDLER, "idler")],
    );
    let seg_ps = seconds_to_ps(SEGMENT_SECONDS);
    let segments = stream.duration_ps.div_ceil(seg_ps);
    let mut stats = SourceStats::default();
    let mut records = Vec::new();
    for k in 0..segments {
        let s = source_segment(
            params,
            seed,
            k,
            &[segment_bounds(k, stream.duration_ps)],
            &mut records,
        );
        stats.add(&s);
    }
    let d = stream.duration_ps;
    records.retain(|t| t.time_ps < d);
    records.sort_unstable();
    stream.records = records;
    Ok((stream, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean_std;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn series_matches_closed_form_at_switch() {
        let lo = step_covariance(SERIES_X * 0.999_999);
        let hi = step_covariance(SERIES_X * 1.000_001);
        for (a, b) in [(lo.l11, hi.l11), (lo.l21, hi.l21), (lo.l22, hi.l22)] {
            assert!((a - b).abs() / b.abs() < 1e-5, "{a} {b}");
        }
    }

    #[test]
    fn stationary_intensity_is_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = FieldProcess::stationary(&mut rng);
        let zs: Vec<f64> = (0..200_000)
            .map(|_| {
                f.advance(0.3, &mut rng);
                f.intensity()
            })
            .collect();
        let (m, _) = mean_std(&zs);
        let m2 = zs.iter().map(|z| z * z).sum::<f64>() / zs.len() as f64;
        assert!((m - 1.0).abs() < 0.03, "{m}");
        assert!((m2 - 2.0).abs() < 0.15, "{m2}");
    }

    #[test]
    fn intensity_autocorrelation_follows_matern_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = 0.7;
        let mut f = FieldProcess::stationary(&mut rng);
        let n = 400_000;
        let mut acc = 0.0;
        let mut prev = f.intensity();
        for _ in 0..n {
            f.advance(x, &mut rng);
            let z = f.intensity();
            acc += prev * z;
            prev = z;
        }
        let g2 = acc / n as f64;
        let expect = 1.0 + math::exp(-2.0 * x) * (1.0 + x) * (1.0 + x);
        assert!((g2 - expect).abs() < 0.04, "{g2} vs {expect}");
    }

    #[test]
    fn pair_rate_and_delay_law() {
        let p = SourceParams::single_mode(20_000.0, 4e7, 3e7);
        let (s, stats) = generate_pair_stream(&p, 2.0, 9).unwrap();
        let n = s.count(Channel::SIGNAL) as f64;
        assert!((n - 40_000.0).abs() < 5.0 * 40_000f64.sqrt() * 2.0, "{n}");
        assert_eq!(stats.pairs as f64, n);
        assert!(stats.clipped < 10);
        let sig = s.channel_times(Channel::SIGNAL);
        let idl = s.channel_times(Channel::IDLER);
        assert!(idl.len() + 2 >= sig.len());
    }

    #[test]
    fn same_seed_same_stream() {
        let p = SourceParams::single_mode(5_000.0, 4e7, 3e7).with_equal_modes(3);
        let a = generate_pair_stream(&p, 1.5, 4).unwrap();
        let b = generate_pair_stream(&p, 1.5, 4).unwrap();
        assert_eq!(a, b);
        let c = generate_pair_stream(&p, 1.5, 5).unwrap();
        assert_ne!(a.0.records, c.0.records);
    }
}
