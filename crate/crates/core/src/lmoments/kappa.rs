//! Four-parameter kappa distribution fitted by L-moment ratios.
//!
//! Quantile: `x(F) = xi + alpha/k * (1 - ((1 - F^h)/h)^k)`. The family
//! contains the GPD (`h = 1`), GEV (`h = 0`) and generalized logistic
//! (`h = -1`). L-moments use the `g_r` functions of the kappa family.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::LMoments;
use crate::error::{domain, Result};

/// Below this |k| quantities are interpolated (cubic, nodes at +-K_EPS and
/// +-3 K_EPS) across k = 0, where the closed forms degenerate to 0/0.
const K_EPS: f64 = 1e-3;
/// Below this |h| the GEV (h = 0) formulas are used.
const H_EPS: f64 = 1e-6;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaParams {
    pub xi: f64,
    pub alpha: f64,
    pub k: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub params: KappaParams,
    /// The target ratios had no kappa solution; a generalized logistic
    /// (`h = -1`) was fitted instead.
    pub fallback: bool,
    /// Max-norm residual on (tau3, tau4) at the returned (k, h).
    pub residual: f64,
}

fn feasible(k: f64, h: f64) -> bool {
    k > -1.0 && k.is_finite() && h.is_finite() && (h >= 0.0 || k * h > -1.0) && h > -1.5 && h < 50.0
}

/// `g_1 .. g_4` of the kappa family.
fn g_values(k: f64, h: f64) -> Option<[f64; 4]> {
    if !feasible(k, h) {
        return None;
    }
    let lg1k = ln_gamma(1.0 + k);
    let mut g = [0.0; 4];
    for (i, gr) in g.iter_mut().enumerate() {
        let r = (i + 1) as f64;
        let ln_g = if h.abs() < H_EPS {
            lg1k - k * r.ln()
        } else if h > 0.0 {
            r.ln() + lg1k + ln_gamma(r / h) - (1.0 + k) * h.ln() - ln_gamma(1.0 + k + r / h)
        } else {
            let a = -k - r / h;
            if a <= 0.0 {
                return None;
            }
            r.ln() + lg1k + ln_gamma(a) - (1.0 + k) * (-h).ln() - ln_gamma(1.0 - r / h)
        };
        *gr = ln_g.exp();
    }
    g.iter().all(|v| v.is_finite()).then_some(g)
}

fn ratios_raw(k: f64, h: f64) -> Option<(f64, f64)> {
    let g = g_values(k, h)?;
    let d = g[0] - g[1];
    if d == 0.0 {
        return None;
    }
    let t3 = (-g[0] + 3.0 * g[1] - 2.0 * g[2]) / d;
    let t4 = (g[0] - 6.0 * g[1] + 10.0 * g[2] - 5.0 * g[3]) / d;
    (t3.is_finite() && t4.is_finite()).then_some((t3, t4))
}

fn interp_across_zero<const N: usize>(k: f64, f: impl Fn(f64) -> Option<[f64; N]>) -> Option<[f64; N]> {
    if k.abs() >= K_EPS {
        return f(k);
    }
    let nodes = [-3.0 * K_EPS, -K_EPS, K_EPS, 3.0 * K_EPS];
    let vals = [f(nodes[0])?, f(nodes[1])?, f(nodes[2])?, f(nodes[3])?];
    let mut out = [0.0; N];
    for (i, &xi) in nodes.iter().enumerate() {
        let w: f64 = nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &xj)| (k - xj) / (xi - xj))
            .product();
        for (o, v) in out.iter_mut().zip(vals[i]) {
            *o += w * v;
        }
    }
    Some(out)
}

/// Population (tau3, tau4) of the kappa distribution with shape (k, h).
pub fn kappa_ratios(k: f64, h: f64) -> Option<(f64, f64)> {
    interp_across_zero(k, |k| ratios_raw(k, h).map(|(a, b)| [a, b])).map(|[a, b]| (a, b))
}

/// `(g1 - g2) / k` and `(1 - g1) / k`, finite through k = 0.
fn scale_terms(k: f64, h: f64) -> Option<[f64; 2]> {
    interp_across_zero(k, |k| {
        let g = g_values(k, h)?;
        Some([(g[0] - g[1]) / k, (1.0 - g[0]) / k])
    })
}

impl KappaParams {
    /// Location and scale matching mean `l1` and L-scale `l2` for shape (k, h).
    pub fn from_shape(k: f64, h: f64, l1: f64, l2: f64) -> Result<Self> {
        let [a, b] = scale_terms(k, h).ok_or_else(|| domain(format!("kappa shape (k={k}, h={h}) infeasible")))?;
        let alpha = l2 / a;
        let xi = l1 - alpha * b;
        if !(alpha > 0.0 && xi.is_finite()) {
            return Err(domain(format!("kappa scale not positive for (k={k}, h={h})")));
        }
        Ok(Self { xi, alpha, k, h })
    }

    pub fn quantile(&self, f: f64) -> f64 {
        let ln_f = f.ln();
        let w = if self.h.abs() < H_EPS { -ln_f } else { -(self.h * ln_f).exp_m1() / self.h };
        let ln_w = w.ln();
        let term = if self.k.abs() < 1e-12 { -ln_w } else { -(self.k * ln_w).exp_m1() / self.k };
        self.xi + self.alpha * term
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        for v in out.iter_mut() {
            let u: f64 = 1.0 - rng.random::<f64>();
            *v = self.quantile(u);
        }
    }
}

fn newton(t3: f64, t4: f64, k0: f64, h0: f64) -> Option<(f64, f64, f64)> {
    let resid = |k: f64, h: f64| kappa_ratios(k, h).map(|(a, b)| (a - t3, b - t4));
    let norm = |r: (f64, f64)| r.0.abs().max(r.1.abs());
    let (mut k, mut h) = (k0, h0);
    let mut r = resid(k, h)?;
    for _ in 0..MAX_ITER {
        if norm(r) < TOL {
            return Some((k, h, norm(r)));
        }
        let dk = 1e-5 * k.abs().max(0.1);
        let dh = 1e-5 * h.abs().max(0.1);
        let (rkp, rkm) = (resid(k + dk, h)?, resid(k - dk, h)?);
        let (rhp, rhm) = (resid(k, h + dh)?, resid(k, h - dh)?);
        let j11 = (rkp.0 - rkm.0) / (2.0 * dk);
        let j21 = (rkp.1 - rkm.1) / (2.0 * dk);
        let j12 = (rhp.0 - rhm.0) / (2.0 * dh);
        let j22 = (rhp.1 - rhm.1) / (2.0 * dh);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let sk = -(j22 * r.0 - j12 * r.1) / det;
        let sh = -(-j21 * r.0 + j11 * r.1) / det;
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let (kn, hn) = (k + step * sk, h + step * sh);
            if let Some(rn) = resid(kn, hn) {
                if norm(rn) < norm(r) {
                    k = kn;
                    h = hn;
                    r = rn;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    (norm(r) < TOL).then_some((k, h, norm(r)))
}

/// Fits a kappa distribution with unit mean to regional (tau, tau3, tau4).
pub fn fit_kappa(regional: &LMoments) -> Result<KappaFit> {
    let (t3, t4) = (regional.tau3, regional.tau4);
    if !(t3 > -1.0 && t3 < 1.0 && t4.is_finite()) {
        return Err(domain(format!("L-moment ratios (tau3={t3}, tau4={t4}) out of range")));
    }
    let l1 = regional.l1;
    let l2 = regional.tau * regional.l1;
    let glo_bound = (1.0 + 5.0 * t3 * t3) / 6.0;
    let lower_bound = (5.0 * t3 * t3 - 1.0) / 4.0;

    if t4 < glo_bound && t4 > lower_bound {
        let k_gpd = (1.0 - 3.0 * t3) / (1.0 + t3);
        let c = 2.0 / (3.0 + t3) - 2f64.ln() / 3f64.ln();
        let k_gev = 7.8590 * c + 2.9554 * c * c;
        let starts = [(k_gpd, 1.0), (k_gev, 1e-3), (-t3, -0.5), (k_gpd, 2.0), (k_gev, 0.5)];
        for (k0, h0) in starts {
            if let Some((k, h, residual)) = newton(t3, t4, k0, h0) {
                if let Ok(params) = KappaParams::from_shape(k, h, l1, l2) {
                    return Ok(KappaFit { params, fallback: false, residual });
                }
            }
        }
    }

    // generalized logistic: h = -1, tau3 = -k
    let k = -t3;
    let params = KappaParams::from_shape(k, -1.0, l1, l2)?;
    let residual = kappa_ratios(k, -1.0).map(|(a, b)| (a - t3).abs().max((b - t4).abs())).unwrap_or(f64::NAN);
    Ok(KappaFit { params, fallback: true, residual })
}
