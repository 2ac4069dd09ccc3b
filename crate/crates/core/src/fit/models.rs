//! Correlation line shapes and their exact bin averages.

use core::f64::consts::LN_2;

use crate::math;

/// Root of `e^{-x}(1 + x) = 1/√2`: half height of the squared auto-correlation
/// envelope.
pub const AUTO_HALF_HEIGHT_X: f64 = 1.077_960_450_100_452_9;

/// Cross-correlation shape with unit peak at `u = 0`.
pub fn cross_shape(u: f64, gamma_s: f64, gamma_i: f64) -> f64 {
    if u >= 0.0 {
        math::exp(-2.0 * gamma_s * u)
    } else {
        math::exp(2.0 * gamma_i * u)
    }
}

/// `∫_a^b e^{-k s} ds` for `0 ≤ a ≤ b`.
fn one_sided(k: f64, a: f64, b: f64) -> f64 {
    -math::exp(-k * a) * math::expm1(-k * (b - a)) / k
}

/// Mean of [`cross_shape`] over `[u1, u2]`.
pub fn cross_bin_mean(u1: f64, u2: f64, gamma_s: f64, gamma_i: f64) -> f64 {
    let w = u2 - u1;
    if w <= 0.0 {
        return cross_shape(u1, gamma_s, gamma_i);
    }
    let (ks, ki) = (2.0 * gamma_s, 2.0 * gamma_i);
    let area = if u1 >= 0.0 {
        one_sided(ks, u1, u2)
    } else if u2 <= 0.0 {
        one_sided(ki, -u2, -u1)
    } else {
        one_sided(ks, 0.0, u2) + one_sided(ki, 0.0, -u1)
    };
    area / w
}

/// Full width at half maximum of the cross-correlation shape.
pub fn cross_fwhm(gamma_s: f64, gamma_i: f64) -> f64 {
    LN_2 / (2.0 * gamma_s) + LN_2 / (2.0 * gamma_i)
}

/// Squared auto-correlation envelope `[e^{-Γ|u|}(1 + Γ|u|)]²`, unit peak.
pub fn auto_shape(u: f64, gamma: f64) -> f64 {
    let x = gamma * u.abs();
    let c = math::exp(-x) * (1.0 + x);
    c * c
}

/// `∫_0^x e^{-2s}(1 + s)² ds` for `x ≥ 0`.
fn auto_integral(x: f64) -> f64 {
    if x < 1e-3 {
        // Series keeps precision where the closed form cancels.
        return x - x * x * x / 3.0 + x * x * x * x / 6.0;
    }
    1.25 - auto_tail(x)
}

/// `∫_x^∞ e^{-2s}(1 + s)² ds`.
fn auto_tail(x: f64) -> f64 {
    let y = 1.0 + x;
    math::exp(-2.0 * x) * (0.5 * y * y + 0.5 * y + 0.25)
}

/// Mean of [`auto_shape`] over `[u1, u2]`.
pub fn auto_bin_mean(u1: f64, u2: f64, gamma: f64) -> f64 {
    let w = u2 - u1;
    if w <= 0.0 {
        return auto_shape(u1, gamma);
    }
    let (x1, x2) = (gamma * u1, gamma * u2);
    let area = if x1 >= 0.0 {
        auto_tail(x1) - auto_tail(x2)
    } else if x2 <= 0.0 {
        auto_tail(-x2) - auto_tail(-x1)
    } else {
        auto_integral(-x1) + auto_integral(x2)
    };
    area / (gamma * w)
}

/// Full width at half height of the auto-correlation excess.
pub fn auto_fwhm(gamma: f64) -> f64 {
    2.0 * AUTO_HALF_HEIGHT_X / gamma
}

/// Decay rates `(γ_s, γ_i)`, `γ_s ≥ γ_i`, reproducing both a cross-correlation
/// FWHM and an auto-correlation FWHM. `None` when no real solution exists; the
/// auto width can be at most `2·x*/ln2` times the cross width.
pub fn rates_from_widths(cross: f64, auto: f64) -> Option<(f64, f64)> {
    if !(cross > 0.0 && auto > 0.0) {
        return None;
    }
    let sum = 4.0 * AUTO_HALF_HEIGHT_X / auto;
    // 1/γ_s + 1/γ_i = 2·cross/ln2, hence γ_s·γ_i = sum / that.
    let product = sum * LN_2 / (2.0 * cross);
    let disc = sum * sum - 4.0 * product;
    if disc < 0.0 {
        return None;
    }
    let d = math::sqrt(disc);
    Some((0.5 * (sum + d), 0.5 * (sum - d)))
}
