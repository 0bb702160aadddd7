//! Quantile estimators behind a common trait, selectable by name.

mod bayes;
mod ifl;

pub use bayes::{BayEstimator, Prepared, RevConfig, RevEstimator};
pub use ifl::{ifl_estimate, IflEstimator};

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rjmcmc::{AcceptCounts, ChainTrace};
use crate::site::SiteRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub estimator: String,
    pub p: f64,
    pub point: f64,
    /// Equal-tailed 90% credibility interval.
    pub ci90: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub h1: Option<f64>,
    pub p_xi: Option<f64>,
    pub xi_fix: Option<f64>,
    pub xi_tilde: Option<f64>,
    pub mass_fraction: Option<f64>,
    pub accept_counts: Option<AcceptCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub estimates: Vec<QuantileEstimate>,
    /// Index flood used by the estimator.
    pub c_hat: f64,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub trace: Option<ChainTrace>,
}

pub trait QuantileEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    fn estimate(&self, sites: &[SiteRecord], target: &str, probs: &[f64], rng: &mut dyn RngCore)
        -> Result<EstimateOutput>;
}

/// Estimators keyed by lower-case name.
#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<String, Box<dyn QuantileEstimator>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// REV, BAY and IFL sharing one configuration.
    pub fn with_defaults(cfg: RevConfig) -> Self {
        let mut r = Self::new();
        r.register(Box::new(RevEstimator::new(cfg.clone())));
        r.register(Box::new(BayEstimator::new(cfg)));
        r.register(Box::new(IflEstimator));
        r
    }

    pub fn register(&mut self, est: Box<dyn QuantileEstimator>) {
        self.entries.insert(est.name().to_ascii_lowercase(), est);
    }

    pub fn get(&self, name: &str) -> Result<&dyn QuantileEstimator> {
        self.entries
            .get(&name.to_ascii_lowercase())
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownEstimator(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub(crate) fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(invalid("no probabilities requested"));
    }
    match probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        Some(p) => Err(invalid(format!("probability must lie in (0, 1), got {p}"))),
        None => Ok(()),
    }
}

/// Linear-interpolation percentile of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Posterior median and 5%/95% percentiles of the `p` quantile over the trace.
pub fn posterior_summary(trace: &ChainTrace, p: f64, estimator: &str) -> Result<QuantileEstimate> {
    if trace.states.is_empty() {
        return Err(invalid("empty trace"));
    }
    check_probs(&[p])?;
    let mut q: Vec<f64> = trace.states.iter().map(|s| s.theta.quantile_unchecked(p)).collect();
    q.sort_by(|a, b| a.total_cmp(b));
    Ok(QuantileEstimate {
        estimator: estimator.to_string(),
        p,
        point: percentile(&q, 0.5),
        ci90: Some((percentile(&q, 0.05), percentile(&q, 0.95))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::GpdParams;
    use crate::rjmcmc::{ChainState, ProposalSds};

    fn trace_of(thetas: &[GpdParams]) -> ChainTrace {
        ChainTrace {
            states: thetas.iter().map(|t| ChainState { theta: *t, in_point_mass: false, log_post: 0.0 }).collect(),
            burn_in: 0,
            accept_counts: AcceptCounts::default(),
            proposal_sds: ProposalSds { mu: 1.0, log_sigma: 1.0, xi: 1.0, jump: 1.0 },
            xi_tilde: 0.0,
            p_match: 0.9,
        }
    }

    #[test]
    fn constant_trace_has_zero_width() {
        let t = trace_of(&[GpdParams { mu: 1.0, sigma: 2.0, xi: 0.1 }; 30]);
        let e = posterior_summary(&t, 0.95, "rev").unwrap();
        let (lo, hi) = e.ci90.unwrap();
        assert_eq!(lo, e.point);
        assert_eq!(hi, e.point);
    }

    #[test]
    fn monotone_in_probability() {
        let thetas: Vec<GpdParams> =
            (0..200).map(|i| GpdParams { mu: 1.0, sigma: 1.0 + 0.01 * i as f64, xi: -0.2 + 0.003 * i as f64 }).collect();
        let t = trace_of(&thetas);
        let mut last = f64::NEG_INFINITY;
        for p in [0.5, 0.75, 0.95, 0.995] {
            let e = posterior_summary(&t, p, "rev").unwrap();
            let (lo, hi) = e.ci90.unwrap();
            assert!(lo <= e.point && e.point <= hi);
            assert!(e.point >= last);
            last = e.point;
        }
    }

    #[test]
    fn registry_lookup() {
        let r = Registry::with_defaults(RevConfig::default());
        assert_eq!(r.names(), vec!["bay", "ifl", "rev"]);
        assert_eq!(r.get("REV").unwrap().name(), "rev");
        assert!(matches!(r.get("mom"), Err(Error::UnknownEstimator(_))));
    }
}
