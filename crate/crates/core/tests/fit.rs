use narrowband_core::analysis::{g2_zero, mode_number, pair_rate_and_brightness, ArmEfficiency};
use narrowband_core::correlator::{CoincidenceCounts, CorrelationHistogram};
use narrowband_core::fit::{self, ModelCurve};
use narrowband_core::math;
use narrowband_core::Channel;
use proptest::prelude::*;

/// Histogram whose values equal the model exactly: integer counts plus a
/// fractional floor.
fn exact(model: ModelCurve, bin_ps: u64, max_ps: u64) -> CorrelationHistogram {
    let mut h = CorrelationHistogram::new(Channel(0), Channel(1), bin_ps, max_ps).unwrap();
    let e = model.expected(&h);
    h.counts = e.iter().map(|v| math::round(*v) as u64).collect();
    h.floor = e.iter().zip(&h.counts).map(|(v, &c)| c as f64 - v).collect();
    h
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Numeric half-maximum width of the cross shape by bisection on both flanks.
fn numeric_cross_fwhm(gs: f64, gi: f64) -> f64 {
    let right = math::bisect(|u| fit::cross_shape(u, gs, gi) - 0.5, 0.0, 10.0 / gs, 1e-18);
    let left = math::bisect(|u| fit::cross_shape(u, gs, gi) - 0.5, -10.0 / gi, 0.0, 1e-18);
    right - left
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_cross_fit_recovers_rates(
        gs in 2e7f64..2e8,
        ratio in 0.2f64..1.0,
        amp in 1e3f64..1e6,
        base_frac in 0.0f64..0.2,
        offset_bins in -3.0f64..3.0,
    ) {
        let gi = gs * ratio;
        let model = ModelCurve::Cross {
            amplitude: amp,
            baseline: amp * base_frac,
            offset: offset_bins * 2.97e-9,
            gamma_s: gs,
            gamma_i: gi,
        };
        // Window wide enough for ten widths of the slower side.
        let max = ((12.0 / gi) * 1e12) as u64;
        let bin = (max / 80).clamp(500, 2970);
        let h = exact(model, bin, max);
        let f = fit::fit_cross_correlation(&h).unwrap();
        prop_assert!(rel(f.gamma_s.value, gs) < 1e-6, "γs {} vs {}", f.gamma_s.value, gs);
        prop_assert!(rel(f.gamma_i.value, gi) < 1e-6, "γi {} vs {}", f.gamma_i.value, gi);
    }

    #[test]
    fn noiseless_auto_fit_recovers_rate(
        g in 2e7f64..2e8,
        vis in 0.2f64..1.0,
        base in 1e2f64..1e6,
    ) {
        let model = ModelCurve::Auto { baseline: base, visibility: vis, offset: 0.0, gamma: g };
        let max = ((15.0 / g) * 1e12) as u64;
        let bin = (max / 80).clamp(500, 4950);
        let h = exact(model, bin, max);
        let f = fit::fit_auto_correlation(&h).unwrap();
        prop_assert!(rel(f.gamma_s.value, g) < 1e-6);
        prop_assert!(rel(f.visibility.unwrap().value, vis) < 1e-6);
    }
}

proptest! {
    #[test]
    fn cross_fwhm_formula_matches_half_max_search(gs in 1e6f64..1e9, gi in 1e6f64..1e9) {
        let a = fit::cross_fwhm(gs, gi);
        prop_assert!(rel(numeric_cross_fwhm(gs, gi), a) < 1e-9);
    }

    #[test]
    fn mode_number_inverts_peak(n in 1u32..100_000) {
        let n = n as f64;
        prop_assert!(rel(mode_number(1.0 + 1.0 / n).unwrap(), n) < 1e-10);
    }

    #[test]
    fn g2_symmetric_in_arms(h in 1u64..1_000_000_000, a in 0u64..1_000_000, b in 0u64..1_000_000, ab in 0u64..10_000) {
        prop_assume!(a + b > 0);
        let c = CoincidenceCounts { c_h: h, cc_ha: a, cc_hb: b, cc_hab: ab, window: 3.5e-6, live_time: 10.0 };
        let d = CoincidenceCounts { cc_ha: b, cc_hb: a, ..c };
        prop_assert_eq!(g2_zero(&c).unwrap(), g2_zero(&d).unwrap());
    }

    #[test]
    fn brightness_is_linear_in_rate(rate in 1.0f64..1e6, p in 0.1f64..100.0, bw in 1e6f64..1e9) {
        let arm = ArmEfficiency { coupling: 0.53, detection: 0.69, filter_transmission: 0.63 };
        let one = pair_rate_and_brightness(rate, arm, arm, p, bw).unwrap();
        let two = pair_rate_and_brightness(2.0 * rate, arm, arm, p, bw).unwrap();
        prop_assert!(rel(two.spectral_brightness, 2.0 * one.spectral_brightness) < 1e-15);
    }
}

#[test]
fn symmetric_cross_width() {
    let g = 5e7;
    assert!(rel(fit::cross_fwhm(g, g), std::f64::consts::LN_2 / g) < 1e-15);
    assert!(rel(numeric_cross_fwhm(g, g), std::f64::consts::LN_2 / g) < 1e-9);
}
