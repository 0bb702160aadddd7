//! Three-parameter generalized Pareto distribution.
//!
//! `G(x) = 1 - [1 + xi (x - mu) / sigma]^(-1/xi)` on `x > mu`,
//! `1 + xi (x - mu) / sigma > 0`, with the exponential law as the `xi -> 0`
//! limit. Shapes with `|xi| < XI_EPS` are evaluated with the exponential
//! formulas.

mod fit;

pub use fit::{fit_mle, FitResult};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::lmoments::LMoments;

/// Shapes closer to zero than this use the exponential limit.
pub const XI_EPS: f64 = 1e-8;

/// Location, scale and shape of a GPD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

impl GpdParams {
    pub fn new(mu: f64, sigma: f64, xi: f64) -> Result<Self> {
        let p = Self { mu, sigma, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.sigma.is_finite() && self.xi.is_finite()) {
            return Err(domain(format!("non-finite GPD parameters {self:?}")));
        }
        if self.sigma <= 0.0 {
            return Err(domain(format!("GPD scale must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Upper end of the support (`+inf` unless `xi < 0`).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < -XI_EPS {
            self.mu - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        x > self.mu && x < self.upper_endpoint()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x <= self.mu {
            return Ok(0.0);
        }
        let z = (x - self.mu) / self.sigma;
        if self.xi.abs() < XI_EPS {
            return Ok(-(-z).exp_m1());
        }
        let t = self.xi * z;
        if t <= -1.0 {
            return Ok(1.0);
        }
        // 1 - (1 + t)^(-1/xi)
        Ok(-(-(t.ln_1p()) / self.xi).exp_m1())
    }

    /// Quantile at non-exceedance probability `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(p > 0.0 && p < 1.0) {
            return Err(domain(format!("probability must lie in (0, 1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    /// Quantile without validation; used on hot paths where `p` and the
    /// parameters are already known to be valid.
    pub fn quantile_unchecked(&self, p: f64) -> f64 {
        let log_exceed = (-p).ln_1p();
        if self.xi.abs() < XI_EPS {
            self.mu - self.sigma * log_exceed
        } else {
            self.mu + self.sigma * (-self.xi * log_exceed).exp_m1() / self.xi
        }
    }

    /// Log-density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= self.mu {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        if self.xi.abs() < XI_EPS {
            return -self.sigma.ln() - z;
        }
        let t = self.xi * z;
        if t <= -1.0 {
            return f64::NEG_INFINITY;
        }
        -self.sigma.ln() - (1.0 / self.xi + 1.0) * t.ln_1p()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Log-likelihood of `sample`; `-inf` if any point is outside the
    /// support or the scale is not positive.
    pub fn loglik(&self, sample: &[f64]) -> f64 {
        if !(self.sigma > 0.0) || !self.xi.is_finite() || !self.mu.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut acc = 0.0;
        for &x in sample {
            let l = self.ln_pdf(x);
            if l == f64::NEG_INFINITY {
                return l;
            }
            acc += l;
        }
        acc
    }

    /// Inverse-transform sampling of `n` values.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|_| {
                // random::<f64>() is in [0, 1); map to (0, 1) by reflection
                let u: f64 = 1.0 - rng.random::<f64>();
                self.quantile_unchecked(1.0 - u)
            })
            .collect()
    }

    /// Population L-moments. Requires `xi < 1` for a finite mean.
    pub fn to_lmoments(&self) -> Result<LMoments> {
        self.validate()?;
        let xi = self.xi;
        if xi >= 1.0 {
            return Err(domain(format!("GPD mean is infinite for xi = {xi}")));
        }
        let l1 = self.mu + self.sigma / (1.0 - xi);
        let l2 = self.sigma / ((1.0 - xi) * (2.0 - xi));
        Ok(LMoments {
            l1,
            tau: l2 / l1,
            tau3: (1.0 + xi) / (3.0 - xi),
            tau4: (1.0 + xi) * (2.0 + xi) / ((3.0 - xi) * (4.0 - xi)),
        })
    }

    /// GPD matching the mean, L-CV and L-skewness of `lm`.
    pub fn from_lmoments(lm: &LMoments) -> Result<Self> {
        if lm.tau3 <= -1.0 || !lm.tau3.is_finite() {
            return Err(domain(format!("L-skewness {} outside (-1, 1)", lm.tau3)));
        }
        let xi = (3.0 * lm.tau3 - 1.0) / (1.0 + lm.tau3);
        let sigma = (xi - 1.0) * (xi - 2.0) * lm.l1 * lm.tau;
        let mu = lm.l1 - sigma / (1.0 - xi);
        Self::new(mu, sigma, xi)
    }
}

pub fn gpd_cdf(params: &GpdParams, x: f64) -> Result<f64> {
    params.cdf(x)
}

pub fn gpd_quantile(params: &GpdParams, p: f64) -> Result<f64> {
    params.quantile(p)
}

pub fn gpd_loglik(params: &GpdParams, sample: &[f64]) -> f64 {
    params.loglik(sample)
}

pub fn gpd_sample<R: Rng + ?Sized>(params: &GpdParams, n: usize, rng: &mut R) -> Vec<f64> {
    params.sample(n, rng)
}

pub fn lmom_to_params(lm: &LMoments) -> Result<GpdParams> {
    GpdParams::from_lmoments(lm)
}

pub fn params_to_lmom(params: &GpdParams) -> Result<LMoments> {
    params.to_lmoments()
}
