//! Prior elicitation from a pooling group.
//!
//! The initial prior is independent lognormal on location and scale and
//! normal on shape, with hyper-parameters built from pseudo-parameters of
//! the non-target sites. The revised prior puts probability `p_xi` on the
//! slice `xi = xi_fix`, where the initial prior restricted to the slice is
//! renormalized over `(mu, sigma)`.

mod index_flood;

pub use index_flood::{fit_index_flood, IndexFloodModel};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gpd::{fit_mle, GpdParams};
use crate::quadrature::integrate_2d_refined;
use crate::site::{find_site, SiteRecord};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Minimum record length for a site to contribute pseudo-parameters.
pub const MIN_SITE_N: usize = 5;
/// Half-width, in prior standard deviations, of the normalizer domain.
const NORM_HALF_WIDTH: f64 = 8.0;

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Hyper-parameters plus the point-mass component of the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Means of (ln mu, ln sigma, xi).
    pub gamma: [f64; 3],
    /// Variances of (ln mu, ln sigma, xi).
    pub d: [f64; 3],
    pub xi_fix: f64,
    pub p_xi: f64,
    /// Log of the integral of the initial prior over (mu, sigma) at
    /// `xi = xi_fix`.
    pub log_norm_const: f64,
}

impl PriorSpec {
    pub fn new(gamma: [f64; 3], d: [f64; 3], xi_fix: f64, p_xi: f64) -> Result<Self> {
        if !d.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("prior variances must be positive, got {d:?}")));
        }
        if !gamma.iter().all(|g| g.is_finite()) || !xi_fix.is_finite() {
            return Err(invalid("prior means and xi_fix must be finite"));
        }
        if !(0.0..=1.0).contains(&p_xi) {
            return Err(invalid(format!("p_xi must lie in [0, 1], got {p_xi}")));
        }
        let mut spec = Self { gamma, d, xi_fix, p_xi, log_norm_const: 0.0 };
        spec.log_norm_const = spec.compute_log_norm_const()?;
        Ok(spec)
    }

    /// Same hyper-parameters with a different point mass.
    pub fn with_point_mass(&self, xi_fix: f64, p_xi: f64) -> Result<Self> {
        Self::new(self.gamma, self.d, xi_fix, p_xi)
    }

    /// Same prior with a different point-mass probability (normalizer reused).
    pub fn with_p_xi(&self, p_xi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_xi) {
            return Err(invalid(format!("p_xi must lie in [0, 1], got {p_xi}")));
        }
        Ok(Self { p_xi, ..self.clone() })
    }

    /// Log-density of the initial prior at (mu, sigma, xi), including the
    /// Jacobian `1 / (mu sigma)`; `-inf` unless mu, sigma > 0.
    pub fn log_initial(&self, mu: f64, sigma: f64, xi: f64) -> f64 {
        if !(mu > 0.0 && sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (lm, ls) = (mu.ln(), sigma.ln());
        ln_normal(lm, self.gamma[0], self.d[0]) - lm + ln_normal(ls, self.gamma[1], self.d[1]) - ls
            + ln_normal(xi, self.gamma[2], self.d[2])
    }

    /// Log-density of the revised prior. On the point mass the shape of
    /// `theta` is ignored and `xi_fix` used.
    pub fn log_prior(&self, theta: &GpdParams, in_point_mass: bool) -> f64 {
        if in_point_mass {
            debug_assert!(theta.xi == self.xi_fix);
            self.p_xi.ln() + self.log_initial(theta.mu, theta.sigma, self.xi_fix) - self.log_norm_const
        } else {
            (1.0 - self.p_xi).ln() + self.log_initial(theta.mu, theta.sigma, theta.xi)
        }
    }

    fn compute_log_norm_const(&self) -> Result<f64> {
        let su = self.d[0].sqrt();
        let sv = self.d[1].sqrt();
        // integrate in (ln mu, ln sigma); dmu dsigma = mu sigma du dv
        let log_f = |u: f64, v: f64| self.log_initial(u.exp(), v.exp(), self.xi_fix) + u + v;
        let reference = log_f(self.gamma[0], self.gamma[1]);
        if !reference.is_finite() {
            return Err(Error::Numerical("prior density not finite at its centre".into()));
        }
        let r = integrate_2d_refined(
            |u, v| (log_f(u, v) - reference).exp(),
            (self.gamma[0] - NORM_HALF_WIDTH * su, self.gamma[0] + NORM_HALF_WIDTH * su),
            (self.gamma[1] - NORM_HALF_WIDTH * sv, self.gamma[1] + NORM_HALF_WIDTH * sv),
            8,
            1e-13,
            256,
        );
        if !(r.value > 0.0 && r.value.is_finite()) {
            return Err(Error::Numerical(format!("point-mass normalizer not positive: {}", r.value)));
        }
        Ok(reference + r.value.ln())
    }
}

/// One non-target site's contribution to the hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSite {
    pub id: String,
    /// Fit of the sample rescaled by its own index flood.
    pub rescaled: GpdParams,
    pub var_log_mu: f64,
    pub var_log_sigma: f64,
    pub converged: bool,
}

/// Hyper-parameters of the initial prior for one target site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalHyper {
    pub gamma: [f64; 3],
    pub d: [f64; 3],
    /// Target index flood predicted without the target's data.
    pub log_c_hat: f64,
    pub var_log_c: f64,
    pub index_model: IndexFloodModel,
    pub pseudo: Vec<PseudoSite>,
}

impl RegionalHyper {
    pub fn c_hat(&self) -> f64 {
        self.log_c_hat.exp()
    }

    pub fn prior(&self, xi_fix: f64, p_xi: f64) -> Result<PriorSpec> {
        PriorSpec::new(self.gamma, self.d, xi_fix, p_xi)
    }
}

/// Pseudo-parameters and hyper-parameters for `target` from the other sites.
pub fn elicit_hyper<R: Rng + ?Sized>(sites: &[SiteRecord], target: &str, rng: &mut R) -> Result<RegionalHyper> {
    let target_site = find_site(sites, target)?;
    let others: Vec<&SiteRecord> = sites.iter().filter(|s| s.id != target && s.n() >= MIN_SITE_N).collect();
    if others.len() < 3 {
        return Err(invalid(format!(
            "prior elicitation needs at least 3 non-target sites with n >= {MIN_SITE_N}, got {}",
            others.len()
        )));
    }
    let index_model = fit_index_flood(sites, Some(target))?;
    let (log_c_hat, var_log_c) = index_model.predict(target_site.area)?;

    let mut pseudo = Vec::with_capacity(others.len());
    for s in &others {
        let c = s.mean();
        if !(c > 0.0) {
            log::warn!("site {} skipped: non-positive index flood", s.id);
            continue;
        }
        let rescaled: Vec<f64> = s.exceedances.iter().map(|x| x / c).collect();
        let fit = match fit_mle(&rescaled, rng) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("site {} skipped: {e}", s.id);
                continue;
            }
        };
        let p = fit.params;
        if !(p.mu > 0.0) {
            log::warn!("site {} skipped: non-positive rescaled location {}", s.id, p.mu);
            continue;
        }
        pseudo.push(PseudoSite {
            id: s.id.clone(),
            rescaled: p,
            var_log_mu: fit.cov[0][0] / (p.mu * p.mu),
            var_log_sigma: fit.cov[1][1] / (p.sigma * p.sigma),
            converged: fit.converged,
        });
    }
    if pseudo.len() < 2 || pseudo.iter().all(|p| !p.converged) {
        return Err(Error::Numerical(format!(
            "too few usable at-site fits for prior elicitation ({} usable, {} converged)",
            pseudo.len(),
            pseudo.iter().filter(|p| p.converged).count()
        )));
    }

    let m = pseudo.len() as f64;
    let mean = |f: &dyn Fn(&PseudoSite) -> f64| pseudo.iter().map(f).sum::<f64>() / m;
    let gamma1 = log_c_hat + mean(&|p| p.rescaled.mu.ln());
    let gamma2 = log_c_hat + mean(&|p| p.rescaled.sigma.ln());
    let gamma3 = mean(&|p| p.rescaled.xi);
    let d1 = var_log_c + mean(&|p| p.var_log_mu);
    let d2 = var_log_c + mean(&|p| p.var_log_sigma);
    let d3 = pseudo.iter().map(|p| (p.rescaled.xi - gamma3).powi(2)).sum::<f64>() / (m - 1.0);
    if !(d1 > 0.0 && d2 > 0.0 && d3 > 0.0) {
        return Err(Error::Numerical(format!("degenerate prior variances ({d1}, {d2}, {d3})")));
    }
    Ok(RegionalHyper {
        gamma: [gamma1, gamma2, gamma3],
        d: [d1, d2, d3],
        log_c_hat,
        var_log_c,
        index_model,
        pseudo,
    })
}

/// Elicits hyper-parameters and attaches the point mass `(xi_fix, p_xi)`.
pub fn build_prior<R: Rng + ?Sized>(
    sites: &[SiteRecord],
    target: &str,
    xi_fix: f64,
    p_xi: f64,
    rng: &mut R,
) -> Result<PriorSpec> {
    elicit_hyper(sites, target, rng)?.prior(xi_fix, p_xi)
}
