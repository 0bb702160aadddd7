//! Classical index-flood estimator with a regional L-moment growth curve.

use rand::RngCore;

use super::{check_probs, Diagnostics, EstimateOutput, QuantileEstimate, QuantileEstimator};
use crate::error::{invalid, Result};
use crate::gpd::{lmom_to_params, GpdParams};
use crate::lmoments::{regional_average, sample_lmoments, LMoments, SiteLmom};
use crate::site::{find_site, SiteRecord};

/// Regional growth curve from every site with at least four values, each
/// rescaled by its own mean.
pub fn regional_growth_curve(sites: &[SiteRecord]) -> Result<GpdParams> {
    let per_site = sites
        .iter()
        .filter(|s| s.n() >= 4)
        .map(|s| {
            let c = s.mean();
            if !(c > 0.0) {
                return Err(invalid(format!("site {} has non-positive mean", s.id)));
            }
            let scaled: Vec<f64> = s.exceedances.iter().map(|x| x / c).collect();
            Ok(SiteLmom { id: s.id.clone(), lmom: sample_lmoments(&scaled)?, n: s.n() })
        })
        .collect::<Result<Vec<_>>>()?;
    let region = regional_average(per_site)?;
    let r = region.regional;
    lmom_to_params(&LMoments { l1: 1.0, ..r })
}

pub fn ifl_estimate(sites: &[SiteRecord], target: &str, probs: &[f64]) -> Result<EstimateOutput> {
    check_probs(probs)?;
    let t = find_site(sites, target)?;
    if t.n() == 0 {
        return Err(invalid(format!("target {target} has no data")));
    }
    let c_hat = t.mean();
    let growth = regional_growth_curve(sites)?;
    let estimates = probs
        .iter()
        .map(|&p| QuantileEstimate { estimator: "ifl".into(), p, point: c_hat * growth.quantile_unchecked(p), ci90: None })
        .collect();
    Ok(EstimateOutput { estimates, c_hat, diagnostics: Diagnostics::default(), trace: None })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IflEstimator;

impl QuantileEstimator for IflEstimator {
    fn name(&self) -> &'static str {
        "ifl"
    }

    fn estimate(&self, sites: &[SiteRecord], target: &str, probs: &[f64], _rng: &mut dyn RngCore) -> Result<EstimateOutput> {
        ifl_estimate(sites, target, probs)
    }
}
