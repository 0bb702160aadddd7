//! Single-model pilot chain used to centre and scale the jump proposal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{run_chain_with_pilot, ChainConfig, MoveSpec, ProposalSds};
use crate::error::{Error, Result};
use crate::prior::PriorSpec;

pub const PILOT_SWEEPS: usize = 2000;
pub const PILOT_BURN_IN: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pilot {
    /// Histogram mode of the shape draws.
    pub xi_tilde: f64,
    pub xi_sd: f64,
    /// SDs tuned during the pilot burn-in.
    pub sds: ProposalSds,
    pub xi_draws: Vec<f64>,
}

/// Freedman-Diaconis histogram of a set of draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl Histogram {
    pub fn freedman_diaconis(draws: &[f64]) -> Result<Self> {
        let mut v: Vec<f64> = draws.iter().copied().filter(|x| x.is_finite()).collect();
        if v.len() < 4 {
            return Err(Error::Numerical("too few draws for a histogram".into()));
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let i = h.floor() as usize;
            let j = (i + 1).min(v.len() - 1);
            v[i] + (h - i as f64) * (v[j] - v[i])
        };
        let iqr = q(0.75) - q(0.25);
        let (lo, hi) = (v[0], v[v.len() - 1]);
        if !(iqr > 0.0) || !(hi > lo) {
            return Err(Error::Numerical("degenerate pilot chain: shape never moved".into()));
        }
        let width = 2.0 * iqr / (v.len() as f64).cbrt();
        let bins = (((hi - lo) / width).ceil() as usize).clamp(1, 10_000);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for x in &v {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        Ok(Self { lo, width, counts, total: v.len() })
    }

    /// Centre of the fullest bin (lowest on ties).
    pub fn mode(&self) -> f64 {
        let best = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.lo + (best as f64 + 0.5) * self.width
    }

    /// Density estimate at `x`; zero outside the histogram range.
    pub fn density(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.width;
        if !(pos >= 0.0) || pos > self.counts.len() as f64 {
            return 0.0;
        }
        let i = (pos as usize).min(self.counts.len() - 1);
        self.counts[i] as f64 / (self.total as f64 * self.width)
    }
}

/// Mode of a Freedman-Diaconis histogram of `draws`.
pub fn histogram_mode(draws: &[f64]) -> Result<f64> {
    Ok(Histogram::freedman_diaconis(draws)?.mode())
}

/// Runs the shape-free pilot chain (no slice mass).
pub fn run_pilot<R: Rng + ?Sized>(spec: &PriorSpec, sample: &[f64], rng: &mut R) -> Result<Pilot> {
    let free = spec.with_p_xi(0.0)?;
    let cfg = ChainConfig { n_iter: PILOT_SWEEPS, burn_in: PILOT_BURN_IN, jump_prob: 0.5 };
    let trace = run_chain_with_pilot(&free, sample, &cfg, &MoveSpec::default(), None, rng)?;
    let xi_draws: Vec<f64> = trace.states.iter().map(|s| s.theta.xi).collect();
    let xi_tilde = histogram_mode(&xi_draws)?;
    let m = xi_draws.len() as f64;
    let mean = xi_draws.iter().sum::<f64>() / m;
    let xi_sd = (xi_draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(Pilot { xi_tilde, xi_sd, sds: trace.proposal_sds, xi_draws })
}

pub fn estimate_xi_tilde<R: Rng + ?Sized>(spec: &PriorSpec, sample: &[f64], rng: &mut R) -> Result<f64> {
    Ok(run_pilot(spec, sample, rng)?.xi_tilde)
}
