//! Sample L-moments, regional averaging, the H1 heterogeneity measure and
//! the point-mass probability derived from it.

mod heterogeneity;
mod kappa;

pub use heterogeneity::{heterogeneity_h1, HetResult, DEFAULT_NSIM};
pub use kappa::{fit_kappa, KappaFit, KappaParams};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Mean, L-CV, L-skewness and L-kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LMoments {
    pub l1: f64,
    pub tau: f64,
    pub tau3: f64,
    pub tau4: f64,
}

impl LMoments {
    /// Second L-moment `l2 = tau * l1`.
    pub fn l2(&self) -> f64 {
        self.tau * self.l1
    }
}

/// Unbiased probability-weighted-moment estimates of the first four
/// L-moments.
pub fn sample_lmoments(sample: &[f64]) -> Result<LMoments> {
    let n = sample.len();
    if n < 4 {
        return Err(invalid(format!("L-moments need at least 4 observations, got {n}")));
    }
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let (mut b0, mut b1, mut b2, mut b3) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let j = i as f64; // (rank - 1)
        let w1 = j / (nf - 1.0);
        let w2 = w1 * (j - 1.0) / (nf - 2.0);
        let w3 = w2 * (j - 2.0) / (nf - 3.0);
        b0 += v;
        b1 += w1 * v;
        b2 += w2 * v;
        b3 += w3 * v;
    }
    b0 /= nf;
    b1 /= nf;
    b2 /= nf;
    b3 /= nf;
    let l1 = b0;
    let l2 = 2.0 * b1 - b0;
    let l3 = 6.0 * b2 - 6.0 * b1 + b0;
    let l4 = 20.0 * b3 - 30.0 * b2 + 12.0 * b1 - b0;
    if !(l2 > 0.0) {
        return Err(invalid("sample has zero L-scale (constant values)"));
    }
    Ok(LMoments { l1, tau: l2 / l1, tau3: l3 / l2, tau4: l4 / l2 })
}

/// Per-site L-moments of a pooling group and their record-length-weighted
/// average (with `l1 = 1`, the growth-curve scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalLmom {
    pub per_site: Vec<SiteLmom>,
    pub regional: LMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteLmom {
    pub id: String,
    pub lmom: LMoments,
    pub n: usize,
}

pub fn regional_average(per_site: Vec<SiteLmom>) -> Result<RegionalLmom> {
    if per_site.len() < 2 {
        return Err(invalid("regional average needs at least 2 sites"));
    }
    if per_site.iter().any(|s| s.n == 0) {
        return Err(invalid("site record lengths must be positive"));
    }
    let total: f64 = per_site.iter().map(|s| s.n as f64).sum();
    let avg = |f: fn(&LMoments) -> f64| per_site.iter().map(|s| s.n as f64 * f(&s.lmom)).sum::<f64>() / total;
    let regional = LMoments { l1: 1.0, tau: avg(|l| l.tau), tau3: avg(|l| l.tau3), tau4: avg(|l| l.tau4) };
    Ok(RegionalLmom { per_site, regional })
}

/// Computes per-site sample L-moments for `(id, sample)` pairs and averages
/// them.
pub fn regional_from_samples<'a, I>(sites: I) -> Result<RegionalLmom>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let per_site = sites
        .into_iter()
        .map(|(id, x)| Ok(SiteLmom { id: id.to_string(), lmom: sample_lmoments(x)?, n: x.len() }))
        .collect::<Result<Vec<_>>>()?;
    regional_average(per_site)
}

/// Point-mass probability from the heterogeneity measure:
/// `exp(-h1) / (1 + exp(-h1))`.
pub fn pxi_from_h1(h1: f64) -> f64 {
    // logistic of -h1, written to avoid overflow for large |h1|
    if h1 >= 0.0 {
        let e = (-h1).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + h1.exp())
    }
}
