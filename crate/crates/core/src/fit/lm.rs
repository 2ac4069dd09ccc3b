//! Small dense Levenberg–Marquardt solver for weighted least squares.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Weighted data points `y_i ± sigma_i`.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    pub y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once every step component is below `step_tol · max(|p|, scale)`.
    pub step_tol: f64,
    /// Relative chi-square decrease below which a step counts as stalled.
    pub chi2_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 400,
            step_tol: 1e-11,
            chi2_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Inverse of `JᵀWJ` at the solution.
    pub covariance: Vec<Vec<f64>>,
    pub chi_square: f64,
    pub iterations: usize,
}

fn chi_square<M: Fn(usize, &[f64]) -> f64>(model: &M, obs: &[Observation], p: &[f64]) -> f64 {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            let r = (o.y - model(i, p)) / o.sigma;
            r * r
        })
        .sum()
}

/// Weighted Jacobian `J_ik / sigma_i` by central differences, and weighted residuals.
fn linearize<M: Fn(usize, &[f64]) -> f64>(
    model: &M,
    obs: &[Observation],
    p: &[f64],
    scales: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = p.len();
    let mut jac = vec![vec![0.0; n]; obs.len()];
    let mut res = vec![0.0; obs.len()];
    let mut q = p.to_vec();
    for k in 0..n {
        let h = 1e-6 * p[k].abs().max(scales[k]);
        q[k] = p[k] + h;
        let hi: Vec<f64> = (0..obs.len()).map(|i| model(i, &q)).collect();
        q[k] = p[k] - h;
        for (i, o) in obs.iter().enumerate() {
            jac[i][k] = (hi[i] - model(i, &q)) / (2.0 * h) / o.sigma;
        }
        q[k] = p[k];
    }
    for (i, o) in obs.iter().enumerate() {
        res[i] = (o.y - model(i, p)) / o.sigma;
    }
    (jac, res)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = math::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

pub(crate) fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

fn inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    // Jacobi scaling keeps the factorization well conditioned for mixed units.
    let n = a.len();
    let d: Vec<f64> = (0..n).map(|i| math::sqrt(a[i][i])).collect();
    if d.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let scaled: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j])).collect())
        .collect();
    let l = cholesky(&scaled)?;
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i] / (d[i] * d[j]);
        }
    }
    Some(inv)
}

/// Minimizes `Σ ((y_i - model(i, p)) / sigma_i)²` starting from `p0`.
///
/// `scales` gives a typical magnitude per parameter, used for finite-difference
/// steps and the convergence test when a parameter is near zero.
pub fn levenberg_marquardt<M: Fn(usize, &[f64]) -> f64>(
    model: M,
    obs: &[Observation],
    p0: &[f64],
    scales: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome> {
    let n = p0.len();
    if obs.len() <= n {
        return Err(Error::InsufficientData(format!(
            "{} points for {} parameters",
            obs.len(),
            n
        )));
    }
    if obs.iter().any(|o| !(o.sigma > 0.0) || !o.y.is_finite()) {
        return Err(Error::invalid("observations", "need finite values and positive errors"));
    }
    let mut p = p0.to_vec();
    let mut chi2 = chi_square(&model, obs, &p);
    if !chi2.is_finite() {
        return Err(Error::FitDiverged("non-finite model at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut converged = false;
    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        let (jac, res) = linearize(&model, obs, &p, scales);
        let mut a = vec![vec![0.0; n]; n];
        let mut g = vec![0.0; n];
        for (row, r) in jac.iter().zip(&res) {
            for i in 0..n {
                g[i] += row[i] * r;
                for j in 0..=i {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                a[j][i] = a[i][j];
            }
        }
        loop {
            if lambda >= 1e16 {
                // No downhill step remains: stationary to working precision.
                converged = true;
                break;
            }
            let mut damped = a.clone();
            for i in 0..n {
                damped[i][i] += lambda * a[i][i].max(1e-300);
            }
            let Some(l) = cholesky(&damped) else {
                lambda *= 10.0;
                continue;
            };
            let step = cholesky_solve(&l, &g);
            let small_step = step
                .iter()
                .enumerate()
                .all(|(k, s)| s.abs() <= opts.step_tol * p[k].abs().max(scales[k]));
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let c = chi_square(&model, obs, &trial);
            if c.is_finite() && c <= chi2 {
                let drop = chi2 - c;
                p = trial;
                chi2 = c;
                lambda = (lambda * 0.1).max(1e-12);
                if drop <= opts.chi2_tol * chi2 {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                converged = small_step || stalled >= 3;
                break;
            }
            if small_step {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
    }
    if !converged {
        return Err(Error::FitDiverged(format!(
            "no convergence after {} iterations",
            opts.max_iterations
        )));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::FitDiverged("non-finite parameters".into()));
    }
    let (jac, _) = linearize(&model, obs, &p, scales);
    let mut a = vec![vec![0.0; n]; n];
    for row in &jac {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    let covariance =
        inverse(&a).ok_or_else(|| Error::FitDiverged("singular curvature matrix".into()))?;
    Ok(LmOutcome {
        params: p,
        covariance,
        chi_square: chi2,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line_matches_normal_equations() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let obs: Vec<Observation> = xs
            .iter()
            .map(|&x| Observation {
                y: 3.0 + 0.5 * x + if (x as i64) % 2 == 0 { 0.1 } else { -0.1 },
                sigma: 0.1,
            })
            .collect();
        let out = levenberg_marquardt(
            |i, p| p[0] + p[1] * xs[i],
            &obs,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        // Closed-form weighted linear regression.
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sy: f64 = obs.iter().map(|o| o.y).sum();
        let sxy: f64 = xs.iter().zip(&obs).map(|(x, o)| x * o.y).sum();
        let det = n * sxx - sx * sx;
        let slope = (n * sxy - sx * sy) / det;
        let icpt = (sxx * sy - sx * sxy) / det;
        assert!((out.params[0] - icpt).abs() < 1e-9);
        assert!((out.params[1] - slope).abs() < 1e-10);
        let var_slope = 0.01 * n / det;
        assert!((out.covariance[1][1] / var_slope - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_decay_from_poor_start() {
        let obs: Vec<Observation> = (0..40)
            .map(|i| Observation {
                y: 50.0 * math::exp(-0.3 * i as f64) + 2.0,
                sigma: 1.0,
            })
            .collect();
        let out = levenberg_marquardt(
            |i, p| p[0] * math::exp(-math::exp(p[1]) * i as f64) + p[2],
            &obs,
            &[10.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!((out.params[0] - 50.0).abs() < 1e-7);
        assert!((math::exp(out.params[1]) - 0.3).abs() < 1e-9);
        assert!((out.params[2] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn too_few_points() {
        let obs = [Observation { y: 1.0, sigma: 1.0 }];
        assert!(matches!(
            levenberg_marquardt(|_, p| p[0], &obs, &[0.0], &[1.0], &LmOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
