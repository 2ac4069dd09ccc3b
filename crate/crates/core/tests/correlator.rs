use narrowband_core::correlator::{self, oracle, FourfoldCounter};
use narrowband_core::tags::{Channel, TimeTag, TimeTagStream};
use proptest::prelude::*;

const CHANNELS: [(Channel, &str); 4] = [
    (Channel(0), "signal-a"),
    (Channel(1), "idler-a"),
    (Channel(2), "signal-b"),
    (Channel(3), "idler-b"),
];

/// Bursty tag sets: bursts of up to 6 tags within a few ns, spread over `span_ps`.
fn stream_strategy(max_bursts: usize) -> impl Strategy<Value = TimeTagStream> {
    (
        1_000u64..2_000_000,
        prop::collection::vec(
            (0.0f64..1.0, prop::collection::vec((0u64..5_000, 0u8..4), 1..6)),
            0..max_bursts,
        ),
    )
        .prop_map(|(span_ps, bursts)| {
            let mut recs = Vec::new();
            for (at, tags) in bursts {
                let t0 = (at * span_ps as f64) as u64;
                for (dt, ch) in tags {
                    recs.push(TimeTag::new(t0 + dt, Channel(ch)));
                }
            }
            TimeTagStream::from_records(recs, 1.0, &CHANNELS)
        })
}

fn shifted(s: &TimeTagStream, by: u64) -> TimeTagStream {
    let mut t = s.clone();
    for r in &mut t.records {
        r.time_ps += by;
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cross_matches_oracle(
        s in stream_strategy(300),
        a in 0u8..4,
        b in 0u8..4,
        bw in 1u64..2_000,
        m in 1u64..20_000,
    ) {
        let (bw, m) = (bw as f64 * 1e-12, (m.max(bw)) as f64 * 1e-12);
        let fast = correlator::cross_correlation(&s, Channel(a), Channel(b), bw, m).unwrap();
        let slow = oracle::cross_correlation(&s, Channel(a), Channel(b), bw, m).unwrap();
        prop_assert_eq!(fast.counts, slow.counts);
    }

    #[test]
    fn heralded_matches_oracle(s in stream_strategy(300), w in 1u64..10_000) {
        let w = w as f64 * 1e-12;
        let fast = correlator::heralded_counts(&s, Channel(1), Channel(0), Channel(2), w).unwrap();
        let slow = oracle::heralded_counts(&s, Channel(1), Channel(0), Channel(2), w);
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn fourfold_matches_oracle(s in stream_strategy(300), w in 1u64..10_000) {
        let w = w as f64 * 1e-12;
        let ch = [Channel(0), Channel(1), Channel(2), Channel(3)];
        prop_assert_eq!(
            correlator::fourfold_count(&s, ch, w).unwrap(),
            oracle::fourfold_count(&s, ch, w)
        );
    }

    #[test]
    fn histogram_independent_of_chunking(s in stream_strategy(300), chunk in 1usize..64) {
        let whole = correlator::cross_correlation(&s, Channel(0), Channel(1), 100e-12, 5e-9).unwrap();
        let parts = correlator::cross_correlation_chunked(&s, Channel(0), Channel(1), 100e-12, 5e-9, chunk)
            .unwrap();
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn fourfold_independent_of_feed_chunking(s in stream_strategy(300), chunk in 1usize..64) {
        let ch = [Channel(0), Channel(1), Channel(2), Channel(3)];
        let mut c = FourfoldCounter::new(ch, 3e-9).unwrap();
        for part in s.records.chunks(chunk) {
            c.push(part).unwrap();
        }
        prop_assert_eq!(c.finish(), correlator::fourfold_count(&s, ch, 3e-9).unwrap());
    }

    #[test]
    fn counts_invariant_under_time_translation(s in stream_strategy(300), by in 0u64..1_000_000_000) {
        let mut t = shifted(&s, by);
        t.duration_ps += by;
        let h = |x: &TimeTagStream| {
            correlator::cross_correlation(x, Channel(0), Channel(1), 250e-12, 4e-9).unwrap().counts
        };
        prop_assert_eq!(h(&s), h(&t));
        let ch = [Channel(0), Channel(1), Channel(2), Channel(3)];
        prop_assert_eq!(
            correlator::fourfold_count(&s, ch, 2e-9).unwrap(),
            correlator::fourfold_count(&t, ch, 2e-9).unwrap()
        );
        let herald = |x: &TimeTagStream| {
            let c = correlator::heralded_counts(x, Channel(1), Channel(0), Channel(2), 2e-9).unwrap();
            (c.c_h, c.cc_ha, c.cc_hb, c.cc_hab)
        };
        prop_assert_eq!(herald(&s), herald(&t));
    }

    #[test]
    fn swapping_channels_mirrors_delays(
        times in prop::collection::vec((0u64..200_000, any::<bool>()), 0..600),
        half_bw in 1u64..500,
        k in 1u64..20,
    ) {
        // Channel 0 on even and channel 1 on odd picoseconds with an even bin width:
        // no delay sits on a bin edge, where half-open bins cannot mirror.
        let recs = times
            .iter()
            .map(|&(t, odd)| TimeTag::new(2 * t + odd as u64, Channel(odd as u8)))
            .collect();
        let s = TimeTagStream::from_records(recs, 1e-6, &CHANNELS);
        let bw = 2 * half_bw;
        let m = k * bw + half_bw;
        let ab = correlator::cross_correlation(&s, Channel(0), Channel(1), bw as f64 * 1e-12, m as f64 * 1e-12)
            .unwrap();
        let ba = correlator::cross_correlation(&s, Channel(1), Channel(0), bw as f64 * 1e-12, m as f64 * 1e-12)
            .unwrap();
        let n = ab.len();
        for j in 0..n {
            prop_assert_eq!(ab.counts[j], ba.counts[n - 1 - j], "bin {}", j);
        }
    }
}

#[test]
fn mirrored_bins_for_off_edge_delays() {
    // Delays that never sit on a bin edge map bin j onto bin len-1-j.
    let recs = vec![
        TimeTag::new(1_000, Channel(0)),
        TimeTag::new(1_150, Channel(1)),
        TimeTag::new(2_010, Channel(1)),
        TimeTag::new(2_140, Channel(0)),
    ];
    let s = TimeTagStream::from_records(recs, 1e-6, &CHANNELS[..2]);
    let ab = correlator::cross_correlation(&s, Channel(0), Channel(1), 100e-12, 1e-9).unwrap();
    let ba = correlator::cross_correlation(&s, Channel(1), Channel(0), 100e-12, 1e-9).unwrap();
    let n = ab.len();
    for j in 0..n {
        assert_eq!(ab.counts[j], ba.counts[n - 1 - j], "bin {j}");
    }
}
