//! Sweeps over the slice probability and the slice shape with common random
//! numbers: every cell of a replicate reuses the same region, hyper-parameters,
//! pilot chain and chain stream.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{median, perf_from_relative, PerfStats};
use super::{estimator_seed, MAX_FAILURE_RATE};
use crate::error::{invalid, Error, Result};
use crate::estimators::{RevConfig, RevEstimator};
use crate::generator::{generate_region, RegionConfig, TARGET_ID};
use crate::rjmcmc::{ChainConfig, Histogram};
use crate::rng::{label, mix_seed, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub name: String,
    pub region: RegionConfig,
    pub n_regions: usize,
    pub p_grid: Vec<f64>,
    /// Slice shapes as multiples of the true regional shape.
    #[serde(default = "default_r_shape")]
    pub r_shape_grid: Vec<f64>,
    pub probs: Vec<f64>,
    pub chain: ChainConfig,
    pub seed: u64,
}

fn default_r_shape() -> Vec<f64> {
    vec![1.0]
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        self.chain.validate()?;
        if self.n_regions < 1 {
            return Err(invalid("n_regions must be at least 1"));
        }
        if self.p_grid.is_empty() || self.r_shape_grid.is_empty() || self.probs.is_empty() {
            return Err(invalid("p_grid, r_shape_grid and probs must be non-empty"));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(invalid(format!("p_xi grid value {p} outside [0, 1]")));
        }
        if let Some(p) = self.probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(invalid(format!("probability must lie in (0, 1), got {p}")));
        }
        if self.region.regional_params.xi == 0.0 && self.r_shape_grid.iter().any(|r| *r != 1.0) {
            return Err(invalid("shape ratios need a non-zero regional shape"));
        }
        Ok(())
    }

    pub fn xi_true(&self) -> f64 {
        self.region.regional_params.xi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellQuantile {
    pub p: f64,
    pub stats: PerfStats,
    pub median_nbias: f64,
    /// Mean of interval width over the true quantile.
    pub mean_rel_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub r_shape: f64,
    pub xi_fix: f64,
    pub p_xi: f64,
    pub mean_mass_fraction: f64,
    pub mass_fraction_se: f64,
    /// Slice occupancy per replicate, in replicate order.
    pub mass_fractions: Vec<f64>,
    pub quantiles: Vec<CellQuantile>,
}

/// How plausible a slice shape is under the shape-free posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRelevance {
    pub r_shape: f64,
    pub xi_fix: f64,
    /// Posterior density at the slice shape over the density at the pilot mode,
    /// averaged over replicates.
    pub d_shape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub config: SensitivityConfig,
    pub cells: Vec<SensitivityCell>,
    pub shapes: Vec<ShapeRelevance>,
    pub attempted: usize,
    pub excluded: usize,
    pub elapsed_secs: f64,
}

impl SensitivityResult {
    pub fn cell(&self, r_shape: f64, p_xi: f64) -> Option<&SensitivityCell> {
        self.cells.iter().find(|c| c.r_shape == r_shape && c.p_xi == p_xi)
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.config.name,
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "n_regions": self.config.n_regions,
            "p_grid": self.config.p_grid,
            "r_shape_grid": self.config.r_shape_grid,
            "chain": self.config.chain,
            "region": self.config.region,
            "shapes": self.shapes,
            "attempted": self.attempted,
            "excluded": self.excluded,
            "elapsed_secs": self.elapsed_secs,
        })
    }
}

struct CellDraw {
    mass_fraction: f64,
    /// (truth, point, width) per probability.
    quantiles: Vec<(f64, f64, f64)>,
}

struct ReplicateDraw {
    cells: Vec<CellDraw>,
    d_shape: Vec<f64>,
}

fn run_replicate(cfg: &SensitivityConfig, r: usize) -> Result<ReplicateDraw> {
    let region = generate_region(&cfg.region, &mut stream_rng(cfg.seed, r as u64))?;
    let truth = region.target_truth().params;
    let truths: Vec<f64> = cfg.probs.iter().map(|&p| truth.quantile(p)).collect::<Result<_>>()?;
    let rev = RevEstimator::new(RevConfig { chain: cfg.chain, p_xi: Some(0.0), ..RevConfig::default() });
    // same stream as the BAY estimator, so the p = 0 cell reproduces it
    let mut rng = stream_rng(estimator_seed(cfg.seed, "bay"), r as u64);
    let prepared = rev.prepare(&region.sites, TARGET_ID, &mut rng)?;
    let pilot = prepared.pilot(&mut stream_rng(mix_seed(cfg.seed, label("pilot")), r as u64))?;
    let hist = Histogram::freedman_diaconis(&pilot.xi_draws)?;
    let at_mode = hist.density(pilot.xi_tilde);

    let mut cells = Vec::new();
    let mut d_shape = Vec::new();
    for &rs in &cfg.r_shape_grid {
        let xi_fix = rs * cfg.xi_true();
        d_shape.push(hist.density(xi_fix) / at_mode);
        for &p in &cfg.p_grid {
            let prior = prepared.prior(xi_fix, p)?;
            let pl = (p > 0.0 && p < 1.0).then_some(&pilot);
            let out = prepared.run(&prior, &cfg.chain, pl, &cfg.probs, "rev", &mut rng.clone())?;
            let quantiles = out
                .estimates
                .iter()
                .zip(&truths)
                .map(|(e, &t)| {
                    let (lo, hi) = e.ci90.unwrap_or((e.point, e.point));
                    (t, e.point, hi - lo)
                })
                .collect();
            cells.push(CellDraw { mass_fraction: out.diagnostics.mass_fraction.unwrap_or(0.0), quantiles });
        }
    }
    Ok(ReplicateDraw { cells, d_shape })
}

/// Runs every (shape ratio, slice probability) cell on each replicate region.
pub fn run_sensitivity(cfg: &SensitivityConfig) -> Result<SensitivityResult> {
    cfg.validate()?;
    let start = Instant::now();
    let draws: Vec<Result<ReplicateDraw>> = (0..cfg.n_regions).into_par_iter().map(|r| run_replicate(cfg, r)).collect();
    let mut ok = Vec::new();
    for (r, d) in draws.into_iter().enumerate() {
        match d {
            Ok(d) => ok.push(d),
            Err(e) => log::warn!("sensitivity replicate {r}: {e}"),
        }
    }
    let excluded = cfg.n_regions - ok.len();
    if excluded as f64 > MAX_FAILURE_RATE * cfg.n_regions as f64 || ok.len() < 2 {
        return Err(Error::Numerical(format!("{excluded} of {} sensitivity replicates failed", cfg.n_regions)));
    }

    let mut cells = Vec::new();
    let mut shapes = Vec::new();
    let np = cfg.p_grid.len();
    for (i, &rs) in cfg.r_shape_grid.iter().enumerate() {
        let d: Vec<f64> = ok.iter().map(|rep| rep.d_shape[i]).filter(|v| v.is_finite()).collect();
        shapes.push(ShapeRelevance {
            r_shape: rs,
            xi_fix: rs * cfg.xi_true(),
            d_shape: d.iter().sum::<f64>() / d.len() as f64,
        });
        for (j, &p) in cfg.p_grid.iter().enumerate() {
            let idx = i * np + j;
            let mass_fractions: Vec<f64> = ok.iter().map(|rep| rep.cells[idx].mass_fraction).collect();
            let k = mass_fractions.len() as f64;
            let mean = mass_fractions.iter().sum::<f64>() / k;
            let var = mass_fractions.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let quantiles = cfg
                .probs
                .iter()
                .enumerate()
                .map(|(q, &prob)| {
                    let rel: Vec<f64> = ok
                        .iter()
                        .map(|rep| {
                            let (t, e, _) = rep.cells[idx].quantiles[q];
                            (e - t) / t
                        })
                        .collect();
                    let width = ok
                        .iter()
                        .map(|rep| {
                            let (t, _, w) = rep.cells[idx].quantiles[q];
                            w / t
                        })
                        .sum::<f64>()
                        / k;
                    Ok(CellQuantile { p: prob, stats: perf_from_relative(&rel)?, median_nbias: median(&rel), mean_rel_width: width })
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(SensitivityCell {
                r_shape: rs,
                xi_fix: rs * cfg.xi_true(),
                p_xi: p,
                mean_mass_fraction: mean,
                mass_fraction_se: (var / k).sqrt(),
                mass_fractions,
                quantiles,
            });
        }
    }
    Ok(SensitivityResult {
        config: cfg.clone(),
        cells,
        shapes,
        attempted: cfg.n_regions,
        excluded,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Slice-probability sweep with the slice at the true regional shape.
pub fn sensitivity_pxi(cfg: &SensitivityConfig) -> Result<SensitivityResult> {
    run_sensitivity(&SensitivityConfig { r_shape_grid: vec![1.0], ..cfg.clone() })
}

/// Joint sweep over slice shapes (as ratios to the true shape) and probabilities.
pub fn sensitivity_xifix(cfg: &SensitivityConfig, r_shape_grid: &[f64], p_grid: &[f64]) -> Result<SensitivityResult> {
    run_sensitivity(&SensitivityConfig { r_shape_grid: r_shape_grid.to_vec(), p_grid: p_grid.to_vec(), ..cfg.clone() })
}

pub const SENSITIVITY_COLUMNS: [&str; 14] = [
    "config",
    "r_shape",
    "xi_fix",
    "p_xi",
    "prob",
    "nbias",
    "median_nbias",
    "sd",
    "nmse",
    "rel_ci_width",
    "mass_fraction",
    "mass_fraction_se",
    "d_shape",
    "k",
];

pub fn write_sensitivity_csv<W: Write>(res: &SensitivityResult, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(SENSITIVITY_COLUMNS)?;
    for c in &res.cells {
        let d = res.shapes.iter().find(|s| s.r_shape == c.r_shape).map_or(f64::NAN, |s| s.d_shape);
        for q in &c.quantiles {
            w.write_record([
                res.config.name.clone(),
                c.r_shape.to_string(),
                c.xi_fix.to_string(),
                c.p_xi.to_string(),
                q.p.to_string(),
                q.stats.nbias.to_string(),
                q.median_nbias.to_string(),
                q.stats.sd.to_string(),
                q.stats.nmse.to_string(),
                q.mean_rel_width.to_string(),
                c.mean_mass_fraction.to_string(),
                c.mass_fraction_se.to_string(),
                d.to_string(),
                q.stats.k.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
