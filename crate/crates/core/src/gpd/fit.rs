//! Maximum-likelihood fitting of the three-parameter GPD.
//!
//! For `xi > -1` the log-likelihood is strictly increasing in the location,
//! so under the constraint `mu < min(sample)` the location estimate sits at
//! the sample minimum (offset by a negligible margin). The scale and shape
//! are then found by Nelder–Mead on `(ln sigma, xi)` with `xi > -0.5`,
//! started from L-moment estimates. Their covariance is the inverse of the
//! numerically differenced observed information; the location, being a
//! boundary estimator, gets the variance of the minimum spacing,
//! `(sigma / n)^2`.

use rand::Rng;

use super::GpdParams;
use crate::error::{invalid, Result};
use crate::lmoments::sample_lmoments;
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Lower bound on the fitted shape.
pub const XI_MIN: f64 = -0.5;

const RESTARTS: usize = 3;
/// Inflation of the fallback (expected-information) covariance.
const FALLBACK_INFLATION: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: GpdParams,
    /// Covariance of (mu, sigma, xi).
    pub cov: [[f64; 3]; 3],
    pub loglik: f64,
    /// `false` when the likelihood search failed and the L-moment fallback
    /// (with inflated covariance) was returned.
    pub converged: bool,
}

impl FitResult {
    pub fn std_errors(&self) -> [f64; 3] {
        [self.cov[0][0].sqrt(), self.cov[1][1].sqrt(), self.cov[2][2].sqrt()]
    }
}

pub fn fit_mle<R: Rng + ?Sized>(sample: &[f64], rng: &mut R) -> Result<FitResult> {
    let n = sample.len();
    if n < 5 {
        return Err(invalid(format!("MLE needs at least 5 observations, got {n}")));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(invalid("sample contains non-finite values"));
    }
    let (min, max) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if max <= min {
        return Err(invalid("degenerate sample: all values are equal"));
    }
    let mu_hat = min - 1e-9 * (max - min);

    let start = start_values(sample, mu_hat);
    let nll = |v: &[f64]| -> f64 {
        if v[1] <= XI_MIN {
            return f64::INFINITY;
        }
        let p = GpdParams { mu: mu_hat, sigma: v[0].exp(), xi: v[1] };
        -p.loglik(sample)
    };

    let opts = NelderMeadOptions::default();
    let mut best = nelder_mead(nll, &[start.0.ln(), start.1], &[0.3, 0.1], &opts);
    for _ in 0..RESTARTS {
        let s = [
            best.x[0] + 0.5 * (rng.random::<f64>() - 0.5),
            (best.x[1] + 0.3 * (rng.random::<f64>() - 0.5)).max(XI_MIN + 0.05),
        ];
        let m = nelder_mead(nll, &s, &[0.2, 0.1], &opts);
        if m.value < best.value - 1e-12 || (!best.converged && m.converged && m.value <= best.value + 1e-9) {
            best = m;
        }
    }

    let params = GpdParams { mu: mu_hat, sigma: best.x[0].exp(), xi: best.x[1] };
    let loglik = -best.value;
    if best.converged && loglik.is_finite() && params.xi > XI_MIN + 1e-6 {
        if let Some(inv) = observed_information_inverse(sample, &params) {
            let cov = [
                [(params.sigma / n as f64).powi(2), 0.0, 0.0],
                [0.0, inv[0][0], inv[0][1]],
                [0.0, inv[1][0], inv[1][1]],
            ];
            return Ok(FitResult { params, cov, loglik, converged: true });
        }
    }
    log::debug!("GPD likelihood fit failed (n = {n}); using L-moment fallback");
    Ok(fallback(sample, mu_hat, start))
}

fn start_values(sample: &[f64], mu_hat: f64) -> (f64, f64) {
    let moment_start = || {
        let n = sample.len() as f64;
        let mean = sample.iter().map(|x| x - mu_hat).sum::<f64>() / n;
        (mean.max(1e-12), 0.0)
    };
    match sample_lmoments(sample).and_then(|lm| GpdParams::from_lmoments(&lm)) {
        Ok(p) if p.xi > XI_MIN && p.xi < 1.0 => {
            // rescale so the start has the same mean excess over mu_hat
            let mean_excess = p.mu + p.sigma / (1.0 - p.xi) - mu_hat;
            let sigma = (mean_excess * (1.0 - p.xi)).max(1e-12);
            (sigma, p.xi.clamp(XI_MIN + 0.05, 0.9))
        }
        _ => moment_start(),
    }
}

/// Inverse of the observed information of (sigma, xi) at fixed location.
fn observed_information_inverse(sample: &[f64], p: &GpdParams) -> Option<[[f64; 2]; 2]> {
    let theta = [p.sigma, p.xi];
    let f = |t: [f64; 2]| -> f64 {
        -GpdParams { mu: p.mu, sigma: t[0], xi: t[1] }.loglik(sample)
    };
    let h = [1e-5 * theta[0].abs().max(1.0), 1e-5 * theta[1].abs().max(1.0)];
    let mut hess = [[0.0; 2]; 2];
    let f0 = f(theta);
    for i in 0..2 {
        let mut tp = theta;
        let mut tm = theta;
        tp[i] += h[i];
        tm[i] -= h[i];
        hess[i][i] = (f(tp) - 2.0 * f0 + f(tm)) / (h[i] * h[i]);
    }
    let mut pp = theta;
    let mut pm = theta;
    let mut mp = theta;
    let mut mm = theta;
    pp[0] += h[0];
    pp[1] += h[1];
    pm[0] += h[0];
    pm[1] -= h[1];
    mp[0] -= h[0];
    mp[1] += h[1];
    mm[0] -= h[0];
    mm[1] -= h[1];
    let off = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h[0] * h[1]);
    hess[0][1] = off;
    hess[1][0] = off;

    let det = hess[0][0] * hess[1][1] - off * off;
    if !(det.is_finite() && det > 0.0 && hess[0][0] > 0.0) {
        return None;
    }
    Some([[hess[1][1] / det, -off / det], [-off / det, hess[0][0] / det]])
}

fn fallback(sample: &[f64], mu_hat: f64, start: (f64, f64)) -> FitResult {
    let n = sample.len() as f64;
    let (sigma, xi) = start;
    let params = GpdParams { mu: mu_hat, sigma, xi };
    let k = FALLBACK_INFLATION / n;
    let one_xi = (1.0 + xi).max(0.5);
    let cov = [
        [FALLBACK_INFLATION * (sigma / n).powi(2), 0.0, 0.0],
        [0.0, k * 2.0 * sigma * sigma * one_xi, -k * sigma * one_xi],
        [0.0, -k * sigma * one_xi, k * one_xi * one_xi],
    ];
    FitResult { params, cov, loglik: params.loglik(sample), converged: false }
}
