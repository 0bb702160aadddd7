//! Hosking–Wallis heterogeneity measure based on L-CV dispersion (H1).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_kappa, RegionalLmom};
use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Number of simulated regions used by default.
pub const DEFAULT_NSIM: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HetResult {
    pub v_obs: f64,
    pub mu_v: f64,
    pub sigma_v: f64,
    pub h1: f64,
    /// The regional kappa fit fell back to the generalized logistic.
    pub kappa_fallback: bool,
}

fn weighted_dispersion(taus: &[f64], ns: &[usize]) -> f64 {
    let total: f64 = ns.iter().map(|&n| n as f64).sum();
    let mean = taus.iter().zip(ns).map(|(t, &n)| n as f64 * t).sum::<f64>() / total;
    let ss = taus.iter().zip(ns).map(|(t, &n)| n as f64 * (t - mean).powi(2)).sum::<f64>();
    (ss / total).sqrt()
}

/// Sample L-CV (`l2 / l1`) from unbiased PWMs; sorts `x` in place.
fn sample_lcv(x: &mut [f64]) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let (mut b0, mut b1) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        b0 += v;
        b1 += i as f64 / (n - 1.0) * v;
    }
    b0 /= n;
    b1 /= n;
    (2.0 * b1 - b0) / b0
}

/// Computes H1 = (V - mu_V) / sigma_V, where V is the record-length
/// weighted standard deviation of at-site L-CVs and (mu_V, sigma_V) are the
/// mean and standard deviation of V over `nsim` homogeneous regions
/// simulated from the fitted regional kappa distribution.
pub fn heterogeneity_h1<R: Rng + ?Sized>(region: &RegionalLmom, nsim: usize, rng: &mut R) -> Result<HetResult> {
    if nsim < 100 {
        return Err(invalid(format!("H1 needs at least 100 simulations, got {nsim}")));
    }
    if region.per_site.iter().any(|s| s.n < 2) {
        return Err(invalid("every site needs at least 2 observations for H1"));
    }
    let taus: Vec<f64> = region.per_site.iter().map(|s| s.lmom.tau).collect();
    let ns: Vec<usize> = region.per_site.iter().map(|s| s.n).collect();
    let v_obs = weighted_dispersion(&taus, &ns);

    let fit = fit_kappa(&region.regional)?;
    let kappa = fit.params;
    let base: u64 = rng.random();
    let max_n = ns.iter().copied().max().unwrap_or(0);
    let sims: Vec<f64> = (0..nsim as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; max_n],
            |buf, s| {
                let mut r = stream_rng(base, s);
                let t: Vec<f64> = ns
                    .iter()
                    .map(|&n| {
                        let x = &mut buf[..n];
                        kappa.sample_into(x, &mut r);
                        sample_lcv(x)
                    })
                    .collect();
                weighted_dispersion(&t, &ns)
            },
        )
        .collect();

    let m = sims.len() as f64;
    let mu_v = sims.iter().sum::<f64>() / m;
    let sigma_v = (sims.iter().map(|v| (v - mu_v).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    if !(sigma_v > 0.0 && sigma_v.is_finite()) {
        return Err(Error::Numerical(format!("simulated dispersion has zero spread (sigma_V = {sigma_v})")));
    }
    Ok(HetResult { v_obs, mu_v, sigma_v, h1: (v_obs - mu_v) / sigma_v, kappa_fallback: fit.fallback })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::GpdParams;
    use crate::lmoments::regional_from_samples;
    use crate::rng::stream_rng;

    #[test]
    fn identical_sites_give_negative_h1() {
        let x = GpdParams::new(0.64, 0.48, 0.26).unwrap().sample(40, &mut stream_rng(1, 0));
        let region = regional_from_samples((0..8).map(|i| (["a", "b", "c", "d", "e", "f", "g", "h"][i], x.as_slice()))).unwrap();
        let h = heterogeneity_h1(&region, 200, &mut stream_rng(1, 1)).unwrap();
        assert_eq!(h.v_obs, 0.0);
        assert!(h.h1 < 0.0);
        assert_eq!(h.h1, (h.v_obs - h.mu_v) / h.sigma_v);
    }

    #[test]
    fn deterministic_under_seed() {
        let p = GpdParams::new(0.64, 0.48, 0.26).unwrap();
        let samples: Vec<Vec<f64>> = (0..6).map(|i| p.sample(30, &mut stream_rng(9, i))).collect();
        let ids = ["a", "b", "c", "d", "e", "f"];
        let region = regional_from_samples(ids.iter().zip(&samples).map(|(i, s)| (*i, s.as_slice()))).unwrap();
        let a = heterogeneity_h1(&region, 150, &mut stream_rng(4, 0)).unwrap();
        let b = heterogeneity_h1(&region, 150, &mut stream_rng(4, 0)).unwrap();
        assert_eq!(a, b);
        assert!(heterogeneity_h1(&region, 50, &mut stream_rng(4, 0)).is_err());
    }
}
