//! Synthetic homogeneous regions: per-site L-moments drawn uniformly in a
//! ball around the regional point, index floods from a noisy area power law,
//! GPD samples at each site.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gpd::{lmom_to_params, params_to_lmom, GpdParams};
use crate::lmoments::LMoments;
use crate::rng::stream_rng;
use crate::site::{write_sites, SiteRecord};

pub const TARGET_ID: &str = "T";
const MAX_BALL_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub regional_params: GpdParams,
    /// Record length of each pooling-group site; the target is extra.
    pub site_sizes: Vec<usize>,
    pub target_size: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_area_log_mean")]
    pub area_log_mean: f64,
    #[serde(default = "default_area_log_sd")]
    pub area_log_sd: f64,
    /// Perturb the area inside the index-flood law.
    #[serde(default = "default_noise")]
    pub noise: bool,
}

fn default_epsilon() -> f64 {
    0.04
}
fn default_alpha() -> f64 {
    0.12
}
fn default_beta() -> f64 {
    1.01
}
fn default_area_log_mean() -> f64 {
    4.8
}
fn default_area_log_sd() -> f64 {
    1.0
}
fn default_noise() -> bool {
    true
}

impl RegionConfig {
    /// Default constants with `n_sites` pool sites of equal size.
    pub fn new(regional_params: GpdParams, n_sites: usize, site_size: usize, target_size: usize) -> Self {
        Self {
            regional_params,
            site_sizes: vec![site_size; n_sites],
            target_size,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            beta: default_beta(),
            area_log_mean: default_area_log_mean(),
            area_log_sd: default_area_log_sd(),
            noise: true,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.regional_params.validate()?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if !(self.alpha > 0.0) || !self.beta.is_finite() || !(self.area_log_sd >= 0.0) {
            return Err(invalid("alpha must be positive, beta finite and area_log_sd non-negative"));
        }
        if self.site_sizes.len() < 2 {
            return Err(invalid("a region needs at least 2 pooling-group sites"));
        }
        if let Some(n) = self.site_sizes.iter().chain([&self.target_size]).find(|n| **n < 5) {
            return Err(invalid(format!("every record length must be at least 5, got {n}")));
        }
        params_to_lmom(&self.regional_params)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTruth {
    pub id: String,
    pub area: f64,
    /// Drawn L-moment point before scaling by the index flood.
    pub lmom: LMoments,
    pub params: GpdParams,
    /// Scaling factor `C`.
    pub index: f64,
    /// Population mean `C * l1`.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRegion {
    pub sites: Vec<SiteRecord>,
    pub truth: Vec<SiteTruth>,
    pub center_lmom: LMoments,
}

impl SyntheticRegion {
    pub fn target_truth(&self) -> &SiteTruth {
        self.truth.iter().find(|t| t.id == TARGET_ID).expect("region always has a target")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_sites(&self.sites, w)
    }

    pub fn write_truth_json<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Truth<'a> {
            center_lmom: &'a LMoments,
            sites: &'a [SiteTruth],
        }
        serde_json::to_writer_pretty(w, &Truth { center_lmom: &self.center_lmom, sites: &self.truth })?;
        Ok(())
    }
}

/// Uniform point in the closed ball of radius `epsilon` around `center`
/// (radius by cube root of a uniform).
pub fn ball_uniform<R: Rng + ?Sized>(center: [f64; 3], epsilon: f64, rng: &mut R) -> [f64; 3] {
    let mut dir = [0.0; 3];
    let mut norm = 0.0;
    while !(norm > 1e-12) {
        for d in dir.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    }
    let r = epsilon * rng.random::<f64>().cbrt();
    [center[0] + r * dir[0] / norm, center[1] + r * dir[1] / norm, center[2] + r * dir[2] / norm]
}

fn valid_point(p: [f64; 3]) -> Option<GpdParams> {
    let [l1, tau, tau3] = p;
    if !(l1 > 0.0 && tau > 0.0 && tau < 1.0 && tau3 > -1.0 && tau3 < 1.0) {
        return None;
    }
    lmom_to_params(&LMoments { l1, tau, tau3, tau4: 0.0 }).ok().filter(|g| g.mu.is_finite())
}

/// Ball draw re-drawn until it maps to a valid GPD.
pub fn ball_lmoments<R: Rng + ?Sized>(center: &LMoments, epsilon: f64, rng: &mut R) -> Result<(LMoments, GpdParams)> {
    for _ in 0..MAX_BALL_RETRIES {
        let p = ball_uniform([center.l1, center.tau, center.tau3], epsilon, rng);
        if let Some(g) = valid_point(p) {
            let lm = params_to_lmom(&g)?;
            return Ok((LMoments { l1: p[0], tau: p[1], tau3: p[2], tau4: lm.tau4 }, g));
        }
    }
    Err(Error::Numerical(format!("no valid L-moment point in {MAX_BALL_RETRIES} ball draws")))
}

/// Catchment area and index flood `alpha * A'^beta`, where `A'` is the area
/// perturbed by up to half its value when `noise` is set.
pub fn draw_index_flood<R: Rng + ?Sized>(cfg: &RegionConfig, rng: &mut R) -> (f64, f64) {
    let area = LogNormal::new(cfg.area_log_mean, cfg.area_log_sd).expect("validated area distribution").sample(rng);
    let u: f64 = rng.random::<f64>() - 0.5;
    let used = if cfg.noise { area * (1.0 + u) } else { area };
    (area, index_from_area(cfg.alpha, cfg.beta, used))
}

pub fn index_from_area(alpha: f64, beta: f64, area: f64) -> f64 {
    alpha * area.powf(beta)
}

fn generate_site(cfg: &RegionConfig, center: &LMoments, id: String, n: usize, seed: u64, stream: u64) -> Result<(SiteRecord, SiteTruth)> {
    let mut rng = stream_rng(seed, stream);
    let (lmom, star) = ball_lmoments(center, cfg.epsilon, &mut rng)?;
    let (area, c) = draw_index_flood(cfg, &mut rng);
    let params = GpdParams { mu: c * star.mu, sigma: c * star.sigma, xi: star.xi };
    let x = params.sample(n, &mut rng);
    let rec = SiteRecord::new(id.clone(), area, x)?;
    Ok((rec, SiteTruth { id, area, lmom, params, index: c, mean: c * lmom.l1 }))
}

/// Pool sites `S01..` followed by the target `T`; each site has its own
/// stream derived from one draw of `rng`.
pub fn generate_region(cfg: &RegionConfig, rng: &mut dyn RngCore) -> Result<SyntheticRegion> {
    cfg.validate()?;
    let center = params_to_lmom(&cfg.regional_params)?;
    let seed = rng.next_u64();
    let width = cfg.n_sites().to_string().len().max(2);
    let mut sites = Vec::with_capacity(cfg.n_sites() + 1);
    let mut truth = Vec::with_capacity(cfg.n_sites() + 1);
    let ids = (0..cfg.n_sites()).map(|i| format!("S{:0width$}", i + 1)).chain([TARGET_ID.to_string()]);
    let sizes = cfg.site_sizes.iter().copied().chain([cfg.target_size]);
    for (stream, (id, n)) in ids.zip(sizes).enumerate() {
        let (s, t) = generate_site(cfg, &center, id, n, seed, stream as u64)?;
        sites.push(s);
        truth.push(t);
    }
    Ok(SyntheticRegion { sites, truth, center_lmom: center })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf1() -> RegionConfig {
        RegionConfig::new(GpdParams { mu: 0.64, sigma: 0.48, xi: 0.26 }, 9, 50, 10)
    }

    #[test]
    fn center_of_conf1() {
        let c = params_to_lmom(&conf1().regional_params).unwrap();
        assert!((c.l1 - 1.288_648_648_648_648_6).abs() < 1e-12);
        assert!((c.tau - 0.2893).abs() < 5e-5);
        assert!((c.tau3 - 0.4599).abs() < 5e-5);
    }

    #[test]
    fn ball_bounds_and_volume() {
        let mut rng = stream_rng(1, 0);
        let c = [1.0, 0.3, 0.4];
        let n = 100_000;
        let mut inner = 0usize;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let p = ball_uniform(c, 0.04, &mut rng);
            let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
            assert!(d <= 0.04 + 1e-15);
            inner += (d <= 0.02) as usize;
            for k in 0..3 {
                mean[k] += p[k] / n as f64;
            }
        }
        let frac = inner as f64 / n as f64;
        let se = (0.125 * 0.875 / n as f64).sqrt();
        assert!((frac - 0.125).abs() < 4.0 * se, "{frac}");
        // per-coordinate variance of a uniform ball is r^2 / 5
        let coord_se = (0.04f64.powi(2) / 5.0 / n as f64).sqrt();
        for k in 0..3 {
            assert!((mean[k] - c[k]).abs() < 3.0 * coord_se);
        }
        assert_eq!(ball_uniform(c, 0.0, &mut rng), c);
    }

    #[test]
    fn noise_free_index_flood() {
        assert!((index_from_area(0.12, 1.01, 100.0) - 12.565_542_576_6).abs() < 1e-9);
    }

    #[test]
    fn degenerate_generator() {
        let mut cfg = conf1();
        cfg.epsilon = 0.0;
        cfg.alpha = 1.0;
        cfg.beta = 0.0;
        cfg.noise = false;
        let reg = generate_region(&cfg, &mut stream_rng(2, 0)).unwrap();
        for t in &reg.truth {
            assert_eq!(t.index, 1.0);
            assert!((t.params.mu - 0.64).abs() < 1e-12);
            assert!((t.params.sigma - 0.48).abs() < 1e-12);
            assert!((t.params.xi - 0.26).abs() < 1e-12);
        }
    }

    #[test]
    fn site_lmoments_match_ball_point() {
        let reg = generate_region(&conf1(), &mut stream_rng(3, 0)).unwrap();
        assert_eq!(reg.sites.len(), 10);
        assert_eq!(reg.sites.last().unwrap().id, TARGET_ID);
        assert_eq!(reg.sites.last().unwrap().n(), 10);
        for t in &reg.truth {
            let lm = params_to_lmom(&t.params).unwrap();
            assert!((lm.l1 / t.index - t.lmom.l1).abs() < 1e-10);
            assert!((lm.tau - t.lmom.tau).abs() < 1e-10);
            assert!((lm.tau3 - t.lmom.tau3).abs() < 1e-10);
            let d = ((t.lmom.l1 - reg.center_lmom.l1).powi(2)
                + (t.lmom.tau - reg.center_lmom.tau).powi(2)
                + (t.lmom.tau3 - reg.center_lmom.tau3).powi(2))
            .sqrt();
            assert!(d <= 0.04 + 1e-12);
            assert!(t.area > 0.0 && t.index > 0.0);
        }
    }

    #[test]
    fn noisy_area_bounds() {
        let cfg = conf1();
        let mut rng = stream_rng(4, 0);
        for _ in 0..1000 {
            let (a, c) = draw_index_flood(&cfg, &mut rng);
            let used = (c / cfg.alpha).powf(1.0 / cfg.beta);
            assert!(used > 0.5 * a * (1.0 - 1e-12) && used < 1.5 * a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let a = generate_region(&conf1(), &mut stream_rng(5, 0)).unwrap();
        let b = generate_region(&conf1(), &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        let mut bad = conf1();
        bad.site_sizes[0] = 3;
        assert!(generate_region(&bad, &mut stream_rng(5, 0)).is_err());
    }
}
