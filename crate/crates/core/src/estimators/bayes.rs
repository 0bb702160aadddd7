//! Bayesian estimators: REV mixes the full space with the fixed-shape slice,
//! BAY is REV without the slice.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_probs, posterior_summary, Diagnostics, EstimateOutput, QuantileEstimator};
use crate::error::Result;
use crate::lmoments::{heterogeneity_h1, pxi_from_h1, regional_from_samples, HetResult, DEFAULT_NSIM};
use crate::prior::{elicit_hyper, PriorSpec, RegionalHyper};
use crate::rjmcmc::{run_chain_with_pilot, run_pilot, ChainConfig, Pilot};
use crate::site::{find_site, SiteRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevConfig {
    #[serde(default)]
    pub chain: ChainConfig,
    /// Simulated regions for the heterogeneity measure.
    #[serde(default = "default_nsim")]
    pub nsim: usize,
    /// Fixed slice probability; skips the heterogeneity measure.
    #[serde(default)]
    pub p_xi: Option<f64>,
    /// Heterogeneity value to use instead of computing it.
    #[serde(default)]
    pub h1: Option<f64>,
    /// Slice shape; the regional mean pseudo-shape otherwise.
    #[serde(default)]
    pub xi_fix: Option<f64>,
}

fn default_nsim() -> usize {
    DEFAULT_NSIM
}

impl Default for RevConfig {
    fn default() -> Self {
        Self { chain: ChainConfig::default(), nsim: DEFAULT_NSIM, p_xi: None, h1: None, xi_fix: None }
    }
}

/// Per-target quantities shared by every slice setting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub hyper: RegionalHyper,
    pub sample: Vec<f64>,
    pub het: Option<HetResult>,
}

impl Prepared {
    pub fn prior(&self, xi_fix: f64, p_xi: f64) -> Result<PriorSpec> {
        self.hyper.prior(xi_fix, p_xi)
    }

    /// Shape-free pilot chain; depends only on the hyper-parameters and data.
    pub fn pilot<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pilot> {
        run_pilot(&self.hyper.prior(self.hyper.gamma[2], 0.0)?, &self.sample, rng)
    }

    /// Runs the chain under `prior` and summarizes each quantile.
    pub fn run<R: Rng + ?Sized>(
        &self,
        prior: &PriorSpec,
        chain: &ChainConfig,
        pilot: Option<&Pilot>,
        probs: &[f64],
        name: &str,
        rng: &mut R,
    ) -> Result<EstimateOutput> {
        check_probs(probs)?;
        let mixing = prior.p_xi > 0.0 && prior.p_xi < 1.0;
        let own;
        let pilot = match pilot {
            Some(p) => Some(p),
            None if mixing => {
                own = run_pilot(prior, &self.sample, rng)?;
                Some(&own)
            }
            None => None,
        };
        let trace = run_chain_with_pilot(prior, &self.sample, chain, &chain.move_spec(), pilot, rng)?;
        let estimates = probs.iter().map(|&p| posterior_summary(&trace, p, name)).collect::<Result<_>>()?;
        Ok(EstimateOutput {
            estimates,
            c_hat: self.hyper.c_hat(),
            diagnostics: Diagnostics {
                h1: self.het.as_ref().map(|h| h.h1),
                p_xi: Some(prior.p_xi),
                xi_fix: Some(prior.xi_fix),
                xi_tilde: mixing.then_some(trace.xi_tilde),
                mass_fraction: Some(trace.mass_fraction()),
                accept_counts: Some(trace.accept_counts),
            },
            trace: Some(trace),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RevEstimator {
    pub cfg: RevConfig,
}

impl RevEstimator {
    pub fn new(cfg: RevConfig) -> Self {
        Self { cfg }
    }

    /// Hyper-parameters, and the heterogeneity measure over every site with
    /// at least four values when no slice probability is given.
    pub fn prepare<R: Rng + ?Sized>(&self, sites: &[SiteRecord], target: &str, rng: &mut R) -> Result<Prepared> {
        let sample = find_site(sites, target)?.exceedances.clone();
        let hyper = elicit_hyper(sites, target, rng)?;
        let het = if self.cfg.p_xi.is_none() && self.cfg.h1.is_none() {
            let region = regional_from_samples(
                sites.iter().filter(|s| s.n() >= 4).map(|s| (s.id.as_str(), s.exceedances.as_slice())),
            )?;
            Some(heterogeneity_h1(&region, self.cfg.nsim, rng)?)
        } else {
            None
        };
        Ok(Prepared { hyper, sample, het })
    }

    pub fn p_xi(&self, prepared: &Prepared) -> f64 {
        match (self.cfg.p_xi, self.cfg.h1, &prepared.het) {
            (Some(p), _, _) => p,
            (None, Some(h), _) => pxi_from_h1(h),
            (None, None, Some(het)) => pxi_from_h1(het.h1),
            (None, None, None) => unreachable!("heterogeneity is computed whenever no override is set"),
        }
    }

    pub fn xi_fix(&self, prepared: &Prepared) -> f64 {
        self.cfg.xi_fix.unwrap_or(prepared.hyper.gamma[2])
    }

    fn estimate_named<R: Rng + ?Sized>(
        &self,
        sites: &[SiteRecord],
        target: &str,
        probs: &[f64],
        name: &str,
        rng: &mut R,
    ) -> Result<EstimateOutput> {
        check_probs(probs)?;
        let prepared = self.prepare(sites, target, rng)?;
        let prior = prepared.prior(self.xi_fix(&prepared), self.p_xi(&prepared))?;
        let mut out = prepared.run(&prior, &self.cfg.chain, None, probs, name, rng)?;
        if let Some(h) = self.cfg.h1 {
            out.diagnostics.h1 = Some(h);
        }
        Ok(out)
    }
}

impl QuantileEstimator for RevEstimator {
    fn name(&self) -> &'static str {
        "rev"
    }

    fn estimate(&self, sites: &[SiteRecord], target: &str, probs: &[f64], rng: &mut dyn RngCore) -> Result<EstimateOutput> {
        self.estimate_named(sites, target, probs, "rev", rng)
    }
}

/// REV with no mass on the slice.
#[derive(Debug, Clone, Default)]
pub struct BayEstimator {
    inner: RevEstimator,
}

impl BayEstimator {
    pub fn new(cfg: RevConfig) -> Self {
        Self { inner: RevEstimator::new(RevConfig { p_xi: Some(0.0), h1: None, ..cfg }) }
    }
}

impl QuantileEstimator for BayEstimator {
    fn name(&self) -> &'static str {
        "bay"
    }

    fn estimate(&self, sites: &[SiteRecord], target: &str, probs: &[f64], rng: &mut dyn RngCore) -> Result<EstimateOutput> {
        let mut out = self.inner.estimate_named(sites, target, probs, "bay", rng)?;
        out.diagnostics.xi_fix = None;
        Ok(out)
    }
}
