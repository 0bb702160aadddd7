//! Monte-Carlo studies over synthetic regions.

mod sensitivity;
mod stats;

pub use sensitivity::{
    run_sensitivity, sensitivity_pxi, sensitivity_xifix, write_sensitivity_csv, SensitivityCell, SensitivityConfig,
    SensitivityResult, ShapeRelevance,
};
pub use stats::{
    bootstrap_se, median, ols_line, paired_bootstrap_ci, perf_from_relative, perf_stats, relative_errors, spearman,
    PerfStats,
};

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{Registry, RevConfig};
use crate::generator::{generate_region, RegionConfig, TARGET_ID};
use crate::lmoments::DEFAULT_NSIM;
use crate::rjmcmc::ChainConfig;
use crate::rng::{label, mix_seed, stream_rng};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Largest tolerated share of failed replicates per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.05;
pub const STUDY_COLUMNS: [&str; 8] = ["config", "estimator", "prob", "nbias", "sd", "nmse", "stderr", "k"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub region: RegionConfig,
    pub n_regions: usize,
    pub estimators: Vec<String>,
    pub probs: Vec<f64>,
    pub chain: ChainConfig,
    pub seed: u64,
    #[serde(default = "default_nsim")]
    pub nsim: usize,
    /// Fixed slice probability for REV instead of the heterogeneity rule.
    #[serde(default)]
    pub p_xi: Option<f64>,
    #[serde(default)]
    pub xi_fix: Option<f64>,
}

fn default_nsim() -> usize {
    DEFAULT_NSIM
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_regions < 1 {
            return Err(invalid("n_regions must be at least 1"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimators selected"));
        }
        if let Some(p) = self.probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(invalid(format!("probability must lie in (0, 1), got {p}")));
        }
        if self.probs.is_empty() {
            return Err(invalid("no probabilities requested"));
        }
        self.region.validate()?;
        self.chain.validate()?;
        let reg = self.registry();
        for e in &self.estimators {
            reg.get(e)?;
        }
        Ok(())
    }

    pub fn rev_config(&self) -> RevConfig {
        RevConfig { chain: self.chain, nsim: self.nsim, p_xi: self.p_xi, h1: None, xi_fix: self.xi_fix }
    }

    pub fn registry(&self) -> Registry {
        Registry::with_defaults(self.rev_config())
    }
}

/// Seed of the stream an estimator draws from in every replicate.
pub fn estimator_seed(seed: u64, estimator: &str) -> u64 {
    mix_seed(seed, label(&estimator.to_ascii_lowercase()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRecord {
    pub p: f64,
    pub truth: f64,
    pub point: f64,
    pub ci90: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: String,
    pub c_hat: f64,
    /// Population mean of the target site.
    pub true_mean: f64,
    pub quantiles: Vec<QuantileRecord>,
    pub mass_fraction: Option<f64>,
    pub p_xi: Option<f64>,
}

impl ReplicateRecord {
    pub fn bias_c(&self) -> f64 {
        (self.c_hat - self.true_mean) / self.true_mean
    }

    pub fn quantile(&self, p: f64) -> Option<&QuantileRecord> {
        self.quantiles.iter().find(|q| q.p == p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub config: String,
    pub estimator: String,
    pub prob: f64,
    pub nbias: f64,
    pub sd: f64,
    pub nmse: f64,
    /// Bootstrap standard error of the NMSE.
    pub stderr: f64,
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    pub attempted: usize,
    pub succeeded: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub replicates: Vec<ReplicateRecord>,
    pub exclusions: BTreeMap<String, Exclusions>,
    pub elapsed_secs: f64,
}

impl StudyResult {
    pub fn row(&self, estimator: &str, prob: f64) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.prob == prob)
    }

    pub fn records(&self, estimator: &str) -> impl Iterator<Item = &ReplicateRecord> {
        let e = estimator.to_string();
        self.replicates.iter().filter(move |r| r.estimator == e)
    }

    /// Squared relative errors per replicate for one estimator and level,
    /// keyed by replicate index.
    pub fn squared_errors(&self, estimator: &str, prob: f64) -> BTreeMap<usize, f64> {
        self.records(estimator)
            .filter_map(|r| r.quantile(prob).map(|q| (r.replicate, ((q.point - q.truth) / q.truth).powi(2))))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(&self.rows, w)
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.config.name,
            "seed": self.config.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "n_regions": self.config.n_regions,
            "estimators": self.config.estimators,
            "probs": self.config.probs,
            "chain": self.config.chain,
            "region": self.config.region,
            "exclusions": self.exclusions,
            "elapsed_secs": self.elapsed_secs,
        })
    }
}

pub fn write_rows<W: Write>(rows: &[StudyRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(STUDY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.estimator.clone(),
            r.prob.to_string(),
            r.nbias.to_string(),
            r.sd.to_string(),
            r.nmse.to_string(),
            r.stderr.to_string(),
            r.k.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn run_replicate(cfg: &StudyConfig, registry: &Registry, r: usize) -> Vec<(String, Result<ReplicateRecord>)> {
    let region = match generate_region(&cfg.region, &mut stream_rng(cfg.seed, r as u64)) {
        Ok(reg) => reg,
        Err(e) => {
            let msg = e.to_string();
            return cfg.estimators.iter().map(|n| (n.to_ascii_lowercase(), Err(Error::Numerical(msg.clone())))).collect();
        }
    };
    let truth = region.target_truth();
    cfg.estimators
        .iter()
        .map(|name| {
            let name = name.to_ascii_lowercase();
            let rec = registry.get(&name).and_then(|est| {
                let mut rng = stream_rng(estimator_seed(cfg.seed, &name), r as u64);
                let out = est.estimate(&region.sites, TARGET_ID, &cfg.probs, &mut rng)?;
                let quantiles = out
                    .estimates
                    .iter()
                    .map(|e| Ok(QuantileRecord { p: e.p, truth: truth.params.quantile(e.p)?, point: e.point, ci90: e.ci90 }))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(q) = quantiles.iter().find(|q| !q.point.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite estimate at p = {}", q.p)));
                }
                Ok(ReplicateRecord {
                    replicate: r,
                    estimator: name.clone(),
                    c_hat: out.c_hat,
                    true_mean: truth.mean,
                    quantiles,
                    mass_fraction: out.diagnostics.mass_fraction,
                    p_xi: out.diagnostics.p_xi,
                })
            });
            if let Err(e) = &rec {
                log::warn!("replicate {r}, estimator {name}: {e}");
            }
            (name, rec)
        })
        .collect()
}

/// Runs every estimator on `n_regions` synthetic regions and pools the
/// target-site relative errors. Replicate `r` draws its region from stream
/// `r` of the study seed and each estimator from stream `r` of its own seed,
/// so results do not depend on scheduling.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let start = Instant::now();
    let registry = cfg.registry();
    let per_rep: Vec<Vec<(String, Result<ReplicateRecord>)>> =
        (0..cfg.n_regions).into_par_iter().map(|r| run_replicate(cfg, &registry, r)).collect();

    let mut exclusions: BTreeMap<String, Exclusions> = BTreeMap::new();
    let mut replicates = Vec::new();
    for (name, rec) in per_rep.into_iter().flatten() {
        let ex = exclusions.entry(name).or_default();
        ex.attempted += 1;
        match rec {
            Ok(rec) => {
                ex.succeeded += 1;
                replicates.push(rec);
            }
            Err(_) => ex.excluded += 1,
        }
    }
    for (name, ex) in &exclusions {
        if ex.excluded > 0 {
            log::info!("{name}: {} of {} replicates excluded", ex.excluded, ex.attempted);
        }
        if ex.excluded as f64 > MAX_FAILURE_RATE * ex.attempted as f64 {
            return Err(Error::Numerical(format!(
                "estimator {name} failed on {} of {} replicates",
                ex.excluded, ex.attempted
            )));
        }
    }

    let mut result = StudyResult { config: cfg.clone(), rows: Vec::new(), replicates, exclusions, elapsed_secs: 0.0 };
    let mut rows = Vec::new();
    for (i, name) in cfg.estimators.iter().map(|e| e.to_ascii_lowercase()).enumerate() {
        for (j, &p) in cfg.probs.iter().enumerate() {
            let rel: Vec<f64> = result
                .records(&name)
                .filter_map(|r| r.quantile(p).map(|q| (q.point - q.truth) / q.truth))
                .collect();
            if rel.len() < 2 {
                continue;
            }
            let s = perf_from_relative(&rel)?;
            let sq: Vec<f64> = rel.iter().map(|e| e * e).collect();
            let mut brng = stream_rng(mix_seed(cfg.seed, label("bootstrap")), (i * cfg.probs.len() + j) as u64);
            rows.push(StudyRow {
                config: cfg.name.clone(),
                estimator: name.clone(),
                prob: p,
                nbias: s.nbias,
                sd: s.sd,
                nmse: s.nmse,
                stderr: bootstrap_se(&sq, BOOTSTRAP_RESAMPLES, &mut brng),
                k: s.k,
            });
        }
    }
    result.rows = rows;
    result.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Paired bootstrap interval for `NMSE(a) - NMSE(b)` over replicates where
/// both estimators succeeded.
pub fn nmse_difference_ci(result: &StudyResult, a: &str, b: &str, prob: f64, level: f64) -> Result<(f64, f64)> {
    let ea = result.squared_errors(a, prob);
    let eb = result.squared_errors(b, prob);
    let (xa, xb): (Vec<f64>, Vec<f64>) = ea.iter().filter_map(|(r, v)| eb.get(r).map(|w| (*v, *w))).unzip();
    let mut rng = stream_rng(mix_seed(result.config.seed, label("paired")), 0);
    paired_bootstrap_ci(&xa, &xb, BOOTSTRAP_RESAMPLES, level, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCFit {
    pub estimator: String,
    pub intercept: f64,
    pub slope: f64,
    pub n: usize,
    pub bias_c_range: (f64, f64),
    /// Scatter of (index-flood relative error, relative error of the quantile).
    pub points: Vec<(f64, f64)>,
}

/// Relative error of the `prob` quantile against the relative error of the
/// index flood, with an OLS line per estimator.
pub fn bias_c_analysis(result: &StudyResult, prob: f64) -> Result<Vec<BiasCFit>> {
    if !result.config.probs.contains(&prob) {
        return Err(invalid(format!("study did not estimate p = {prob}")));
    }
    let mut out = Vec::new();
    for name in result.config.estimators.iter().map(|e| e.to_ascii_lowercase()) {
        let points: Vec<(f64, f64)> = result
            .records(&name)
            .filter_map(|r| r.quantile(prob).map(|q| (r.bias_c(), (q.point - q.truth) / q.truth)))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
        let (intercept, slope) = ols_line(&x, &y)?;
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(BiasCFit { estimator: name, intercept, slope, n: points.len(), bias_c_range: (lo, hi), points });
    }
    Ok(out)
}
