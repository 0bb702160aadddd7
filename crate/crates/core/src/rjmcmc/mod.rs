//! Reversible-jump Metropolis-within-Gibbs sampler over the mixture of the
//! full parameter space and the fixed-shape slice.

mod jumps;
mod pilot;

pub use jumps::{
    full_proposal, growth_factor, jump_jacobian, jump_to_full, jump_to_mass, mass_proposal, matched_scale,
};
pub use pilot::{estimate_xi_tilde, histogram_mode, Histogram, run_pilot, Pilot, PILOT_BURN_IN, PILOT_SWEEPS};

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gpd::GpdParams;
use crate::prior::PriorSpec;

pub const ADAPT_EVERY: usize = 50;
pub const TRACE_COLUMNS: [&str; 6] = ["iter", "mu", "sigma", "xi", "in_mass", "log_post"];
const ACC_LOW: f64 = 0.2;
const ACC_HIGH: f64 = 0.5;
/// Adapted SDs stay within this factor of their starting value.
const ADAPT_RANGE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub theta: GpdParams,
    pub in_point_mass: bool,
    /// Unnormalized log posterior under the revised prior.
    pub log_post: f64,
}

impl ChainState {
    /// State with its cached log posterior. On the slice the shape is
    /// overwritten with `xi_fix`.
    pub fn new(spec: &PriorSpec, sample: &[f64], mut theta: GpdParams, in_point_mass: bool) -> Self {
        if in_point_mass {
            theta.xi = spec.xi_fix;
        }
        let log_post = log_posterior(spec, sample, &theta, in_point_mass);
        Self { theta, in_point_mass, log_post }
    }
}

pub fn log_posterior(spec: &PriorSpec, sample: &[f64], theta: &GpdParams, in_point_mass: bool) -> f64 {
    let lp = spec.log_prior(theta, in_point_mass);
    if lp == f64::NEG_INFINITY || lp.is_nan() {
        return f64::NEG_INFINITY;
    }
    let ll = theta.loglik(sample);
    if ll.is_nan() {
        return f64::NEG_INFINITY;
    }
    lp + ll
}

/// Random-walk SDs for location, log-scale, shape, and the jump proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalSds {
    pub mu: f64,
    pub log_sigma: f64,
    pub xi: f64,
    pub jump: f64,
}

impl ProposalSds {
    fn as_array(&self) -> [f64; 4] {
        [self.mu, self.log_sigma, self.xi, self.jump]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self { mu: a[0], log_sigma: a[1], xi: a[2], jump: a[3] }
    }

    /// Starting SDs from the prior and the data size.
    pub fn initial(spec: &PriorSpec, n: usize) -> Self {
        let rn = 1.0 / (n.max(1) as f64).sqrt();
        Self {
            mu: spec.gamma[1].exp() / n.max(1) as f64,
            log_sigma: spec.d[1].sqrt().min(rn),
            xi: spec.d[2].sqrt().min(rn),
            jump: spec.d[2].sqrt().min(rn),
        }
    }
}

/// Accepted / attempted tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub accepted: u64,
    pub attempted: u64,
}

impl Tally {
    fn record(&mut self, ok: bool) {
        self.attempted += 1;
        self.accepted += ok as u64;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.attempted > 0).then(|| self.accepted as f64 / self.attempted as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCounts {
    pub mu: Tally,
    pub sigma: Tally,
    pub xi: Tally,
    pub to_full: Tally,
    pub to_mass: Tally,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveSpec {
    /// Chance of attempting a trans-dimensional move after each sweep.
    pub jump_prob: f64,
    /// Override for the jump SD; the pilot's shape SD is used otherwise.
    pub s_xi: Option<f64>,
}

impl Default for MoveSpec {
    fn default() -> Self {
        Self { jump_prob: 0.5, s_xi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    #[serde(default = "default_jump_prob")]
    pub jump_prob: f64,
}

fn default_jump_prob() -> f64 {
    0.5
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_iter: 15_000, burn_in: 2_000, jump_prob: 0.5 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(invalid(format!("n_iter ({}) must exceed burn_in ({})", self.n_iter, self.burn_in)));
        }
        if !(self.jump_prob > 0.0 && self.jump_prob < 1.0) {
            return Err(invalid(format!("jump_prob must lie in (0, 1), got {}", self.jump_prob)));
        }
        Ok(())
    }

    pub fn move_spec(&self) -> MoveSpec {
        MoveSpec { jump_prob: self.jump_prob, s_xi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    /// Post-burn-in states, one per iteration.
    pub states: Vec<ChainState>,
    pub burn_in: usize,
    pub accept_counts: AcceptCounts,
    pub proposal_sds: ProposalSds,
    pub xi_tilde: f64,
    pub p_match: f64,
}

impl ChainTrace {
    pub fn mass_fraction(&self) -> f64 {
        if self.states.is_empty() {
            return f64::NAN;
        }
        self.states.iter().filter(|s| s.in_point_mass).count() as f64 / self.states.len() as f64
    }
}

/// Quantile level matched by the trans-dimensional moves for a sample of size `n`.
pub fn p_match(n: usize) -> f64 {
    1.0 - 1.0 / (2.0 * n as f64)
}

/// One Metropolis pass over location, log-scale and (off the slice) shape.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    sds: &ProposalSds,
    rng: &mut R,
) -> ChainState {
    gibbs_sweep_counted(state, spec, sample, sds, &mut AcceptCounts::default(), rng)
}

fn gibbs_sweep_counted<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    sds: &ProposalSds,
    counts: &mut AcceptCounts,
    rng: &mut R,
) -> ChainState {
    let mut cur = state.clone();

    let z: f64 = rng.sample(StandardNormal);
    let mut theta = cur.theta;
    theta.mu += sds.mu * z;
    let ok = metropolis(&mut cur, spec, sample, theta, 0.0, rng);
    counts.mu.record(ok);

    let z: f64 = rng.sample(StandardNormal);
    let step = sds.log_sigma * z;
    let mut theta = cur.theta;
    theta.sigma *= step.exp();
    // proposal density is uniform in log sigma
    let ok = metropolis(&mut cur, spec, sample, theta, step, rng);
    counts.sigma.record(ok);

    if !cur.in_point_mass {
        let z: f64 = rng.sample(StandardNormal);
        let mut theta = cur.theta;
        theta.xi += sds.xi * z;
        let ok = metropolis(&mut cur, spec, sample, theta, 0.0, rng);
        counts.xi.record(ok);
    }
    cur
}

fn metropolis<R: Rng + ?Sized>(
    cur: &mut ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    theta: GpdParams,
    log_hastings: f64,
    rng: &mut R,
) -> bool {
    if theta == cur.theta {
        return true;
    }
    let lp = log_posterior(spec, sample, &theta, cur.in_point_mass);
    if jumps::accept(cur.log_post, lp, lp - cur.log_post + log_hastings, rng) {
        cur.theta = theta;
        cur.log_post = lp;
        true
    } else {
        false
    }
}

fn initial_state(spec: &PriorSpec, sample: &[f64], on_mass: bool) -> Result<ChainState> {
    let min_x = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let mut mu = spec.gamma[0].exp();
    if !(mu < min_x) && min_x > 0.0 {
        mu = 0.99 * min_x;
    }
    let xi = if on_mass { spec.xi_fix } else { spec.gamma[2] };
    let mut theta = GpdParams { mu, sigma: spec.gamma[1].exp(), xi };
    let mut state = ChainState::new(spec, sample, theta, on_mass);
    // a negative shape may put the upper endpoint below the data
    for _ in 0..60 {
        if state.log_post.is_finite() {
            return Ok(state);
        }
        theta.sigma *= 2.0;
        state = ChainState::new(spec, sample, theta, on_mass);
    }
    Err(Error::Numerical(format!(
        "no finite starting point: prior centre (mu={mu}, sigma={}, xi={xi}) is incompatible with the sample (min={min_x})",
        spec.gamma[1].exp()
    )))
}

fn adapt(sds: &mut [f64; 4], init: &[f64; 4], window: &[Tally; 4]) {
    for i in 0..4 {
        if let Some(r) = window[i].rate() {
            if r > ACC_HIGH {
                sds[i] *= 1.1;
            } else if r < ACC_LOW {
                sds[i] *= 0.9;
            }
            sds[i] = sds[i].clamp(init[i] / ADAPT_RANGE, init[i] * ADAPT_RANGE);
        }
    }
}

/// Runs the sampler, computing the pilot chain first when the prior puts
/// mass strictly between 0 and 1 on the slice.
pub fn run_chain<R: Rng + ?Sized>(
    spec: &PriorSpec,
    sample: &[f64],
    cfg: &ChainConfig,
    moves: &MoveSpec,
    rng: &mut R,
) -> Result<ChainTrace> {
    let pilot = if spec.p_xi > 0.0 && spec.p_xi < 1.0 { Some(run_pilot(spec, sample, rng)?) } else { None };
    run_chain_with_pilot(spec, sample, cfg, moves, pilot.as_ref(), rng)
}

/// Runs the sampler from a precomputed pilot. The pilot only depends on the
/// hyper-parameters and the sample, so it can be shared across point-mass
/// settings.
pub fn run_chain_with_pilot<R: Rng + ?Sized>(
    spec: &PriorSpec,
    sample: &[f64],
    cfg: &ChainConfig,
    moves: &MoveSpec,
    pilot: Option<&Pilot>,
    rng: &mut R,
) -> Result<ChainTrace> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(invalid("sample is empty"));
    }
    if !(moves.jump_prob > 0.0 && moves.jump_prob < 1.0) {
        return Err(invalid(format!("jump_prob must lie in (0, 1), got {}", moves.jump_prob)));
    }
    let n = sample.len();
    let pm = p_match(n);
    let mixing = spec.p_xi > 0.0 && spec.p_xi < 1.0;
    if mixing && pilot.is_none() {
        return Err(invalid("a pilot chain is required when 0 < p_xi < 1"));
    }

    let mut sds = match pilot {
        Some(p) => p.sds,
        None => ProposalSds::initial(spec, n),
    };
    if let Some(p) = pilot {
        sds.jump = p.xi_sd;
    }
    if let Some(s) = moves.s_xi {
        sds.jump = s;
    }
    let xi_tilde = pilot.map_or(spec.gamma[2], |p| p.xi_tilde);
    let init = sds.as_array();

    let mut state = initial_state(spec, sample, spec.p_xi > 0.0)?;
    let mut counts = AcceptCounts::default();
    let mut window = AcceptCounts::default();
    let mut states = Vec::with_capacity(cfg.n_iter - cfg.burn_in);

    for it in 0..cfg.n_iter {
        let burning = it < cfg.burn_in;
        let tally = if burning { &mut window } else { &mut counts };
        state = gibbs_sweep_counted(&state, spec, sample, &sds, tally, rng);
        if mixing && rng.random::<f64>() < moves.jump_prob {
            if state.in_point_mass {
                let (next, ok) = jump_to_full(&state, spec, sample, xi_tilde, sds.jump, pm, rng);
                tally.to_full.record(ok);
                state = next;
            } else {
                let (next, ok) = jump_to_mass(&state, spec, sample, xi_tilde, sds.jump, pm, rng);
                tally.to_mass.record(ok);
                state = next;
            }
        }
        if burning && (it + 1) % ADAPT_EVERY == 0 {
            let jump = Tally {
                accepted: window.to_full.accepted + window.to_mass.accepted,
                attempted: window.to_full.attempted + window.to_mass.attempted,
            };
            let mut a = sds.as_array();
            adapt(&mut a, &init, &[window.mu, window.sigma, window.xi, jump]);
            sds = ProposalSds::from_array(a);
            window = AcceptCounts::default();
        }
        if !burning {
            states.push(state.clone());
        }
    }
    Ok(ChainTrace { states, burn_in: cfg.burn_in, accept_counts: counts, proposal_sds: sds, xi_tilde, p_match: pm })
}

/// Writes the retained states as CSV; `iter` counts from the start of the
/// chain, burn-in included.
pub fn write_trace<W: Write>(trace: &ChainTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS)?;
    for (i, s) in trace.states.iter().enumerate() {
        w.write_record([
            (trace.burn_in + i + 1).to_string(),
            s.theta.mu.to_string(),
            s.theta.sigma.to_string(),
            s.theta.xi.to_string(),
            (s.in_point_mass as u8).to_string(),
            s.log_post.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn toy() -> (PriorSpec, Vec<f64>) {
        let spec = PriorSpec::new([0.0, 0.0, 0.2], [0.1, 0.1, 0.0225], 0.25, 0.5).unwrap();
        let sample = GpdParams { mu: 1.0, sigma: 1.0, xi: 0.2 }.sample(20, &mut stream_rng(11, 0));
        (spec, sample)
    }

    fn short() -> ChainConfig {
        ChainConfig { n_iter: 1500, burn_in: 500, jump_prob: 0.5 }
    }

    #[test]
    fn log_posterior_sentinel_and_additivity() {
        let (spec, sample) = toy();
        let bad = GpdParams { mu: 10.0, sigma: 1.0, xi: 0.2 };
        assert_eq!(log_posterior(&spec, &sample, &bad, false), f64::NEG_INFINITY);
        let th = GpdParams { mu: 0.5, sigma: 1.0, xi: 0.2 };
        let doubled: Vec<f64> = sample.iter().chain(sample.iter()).copied().collect();
        let l1 = log_posterior(&spec, &sample, &th, false) - spec.log_prior(&th, false);
        let l2 = log_posterior(&spec, &doubled, &th, false) - spec.log_prior(&th, false);
        assert!((l2 - 2.0 * l1).abs() < 1e-10 * l1.abs());
    }

    #[test]
    fn zero_sd_sweep_is_identity() {
        let (spec, sample) = toy();
        let s = ChainState::new(&spec, &sample, GpdParams { mu: 0.5, sigma: 1.0, xi: 0.1 }, false);
        let sds = ProposalSds { mu: 0.0, log_sigma: 0.0, xi: 0.0, jump: 0.1 };
        let next = gibbs_sweep(&s, &spec, &sample, &sds, &mut stream_rng(1, 1));
        assert_eq!(next, s);
    }

    #[test]
    fn sweep_keeps_slice() {
        let (spec, sample) = toy();
        let mut s = ChainState::new(&spec, &sample, GpdParams { mu: 0.5, sigma: 1.0, xi: 0.0 }, true);
        let sds = ProposalSds::initial(&spec, sample.len());
        let mut rng = stream_rng(2, 0);
        for _ in 0..200 {
            s = gibbs_sweep(&s, &spec, &sample, &sds, &mut rng);
            assert!(s.in_point_mass && s.theta.xi == spec.xi_fix);
        }
    }

    #[test]
    fn extreme_mass_probabilities() {
        let (spec, sample) = toy();
        let one = spec.with_p_xi(1.0).unwrap();
        let t = run_chain(&one, &sample, &short(), &MoveSpec::default(), &mut stream_rng(4, 0)).unwrap();
        assert!(t.states.iter().all(|s| s.in_point_mass && s.theta.xi == one.xi_fix));
        let zero = spec.with_p_xi(0.0).unwrap();
        let t = run_chain(&zero, &sample, &short(), &MoveSpec::default(), &mut stream_rng(4, 0)).unwrap();
        assert!(t.states.iter().all(|s| !s.in_point_mass));
        assert_eq!(t.states.len(), 1000);
    }

    #[test]
    fn mixing_chain_visits_both_spaces_and_is_reproducible() {
        let (spec, sample) = toy();
        let a = run_chain(&spec, &sample, &short(), &MoveSpec::default(), &mut stream_rng(5, 0)).unwrap();
        let b = run_chain(&spec, &sample, &short(), &MoveSpec::default(), &mut stream_rng(5, 0)).unwrap();
        assert_eq!(a, b);
        let f = a.mass_fraction();
        assert!(f > 0.0 && f < 1.0, "{f}");
        for s in &a.states {
            if s.in_point_mass {
                assert_eq!(s.theta.xi, spec.xi_fix);
            }
        }
    }

    #[test]
    fn config_validation() {
        let (spec, sample) = toy();
        let cfg = ChainConfig { n_iter: 100, burn_in: 100, jump_prob: 0.5 };
        assert!(run_chain(&spec, &sample, &cfg, &MoveSpec::default(), &mut stream_rng(0, 0)).is_err());
        assert!(run_chain(&spec, &[], &short(), &MoveSpec::default(), &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let (spec, sample) = toy();
        let t = run_chain(&spec, &sample, &short(), &MoveSpec::default(), &mut stream_rng(6, 0)).unwrap();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,mu,sigma,xi,in_mass,log_post");
        assert_eq!(lines.count(), t.states.len());
    }
}
