//! Log-linear regression of the at-site index flood on catchment area.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::site::SiteRecord;

/// OLS fit of `ln C = b0 + b1 ln(area)` where `C` is the at-site sample mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFloodModel {
    pub coeffs: [f64; 2],
    /// Residual variance `SSR / (m - 2)`.
    pub resid_var: f64,
    /// `(X^T X)^-1` of the design `(1, ln area)`.
    pub gram_inverse: [[f64; 2]; 2],
    pub r2: f64,
    pub n_sites: usize,
}

impl IndexFloodModel {
    /// Predicted log index flood and its full prediction variance
    /// `s^2 (1 + x0^T (X^T X)^-1 x0)` at a new site.
    pub fn predict(&self, area: f64) -> Result<(f64, f64)> {
        if !(area > 0.0) {
            return Err(invalid(format!("area must be positive, got {area}")));
        }
        let x = [1.0, area.ln()];
        let fit = self.coeffs[0] + self.coeffs[1] * x[1];
        let g = &self.gram_inverse;
        let leverage = x[0] * (g[0][0] * x[0] + g[0][1] * x[1]) + x[1] * (g[1][0] * x[0] + g[1][1] * x[1]);
        Ok((fit, self.resid_var * (1.0 + leverage)))
    }
}

pub fn fit_index_flood(sites: &[SiteRecord], exclude: Option<&str>) -> Result<IndexFloodModel> {
    let pts: Vec<(f64, f64)> = sites
        .iter()
        .filter(|s| Some(s.id.as_str()) != exclude)
        .map(|s| {
            let c = s.mean();
            if s.n() == 0 || !(c > 0.0) {
                Err(invalid(format!("site {} has no positive index flood", s.id)))
            } else {
                Ok((s.area.ln(), c.ln()))
            }
        })
        .collect::<Result<_>>()?;
    let m = pts.len();
    if m < 3 {
        return Err(invalid(format!("index-flood regression needs at least 3 sites, got {m}")));
    }
    let mf = m as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let det = mf * sxx - sx * sx;
    let xbar = sx / mf;
    let sxx_c: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    if !(sxx_c > 1e-12 * (1.0 + sxx)) || det <= 0.0 {
        return Err(Error::Numerical("degenerate design: catchment areas are (nearly) identical".into()));
    }
    let b1 = (mf * sxy - sx * sy) / det;
    let b0 = (sy - b1 * sx) / mf;
    let ybar = sy / mf;
    let ssr: f64 = pts.iter().map(|p| (p.1 - b0 - b1 * p.0).powi(2)).sum();
    let sst: f64 = pts.iter().map(|p| (p.1 - ybar).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(IndexFloodModel {
        coeffs: [b0, b1],
        resid_var: ssr / (mf - 2.0),
        gram_inverse: [[sxx / det, -sx / det], [-sx / det, mf / det]],
        r2,
        n_sites: m,
    })
}
