//! Trans-dimensional moves between the shape slice and the full space.
//!
//! Both moves keep the location and the `p_match` quantile fixed, so the
//! scale follows from the shape: `sigma' = sigma * h(xi) / h(xi')` with
//! `h(xi) = ((1 - p_match)^-xi - 1) / xi`.

use rand::Rng;

use super::ChainState;
use crate::gpd::GpdParams;
use crate::prior::PriorSpec;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `h(xi)` above; strictly positive for every finite `xi`.
pub fn growth_factor(xi: f64, p_match: f64) -> f64 {
    let ly = (-p_match).ln_1p();
    let a = -xi * ly;
    if a.abs() < 1e-8 {
        -ly * (1.0 + 0.5 * a)
    } else {
        a.exp_m1() / xi
    }
}

/// Scale that keeps the `p_match` quantile unchanged when the shape moves
/// from `xi_from` to `xi_to`.
pub fn matched_scale(sigma: f64, xi_from: f64, xi_to: f64, p_match: f64) -> f64 {
    sigma * growth_factor(xi_from, p_match) / growth_factor(xi_to, p_match)
}

/// Reciprocal of `d sigma' / d sigma` for the jump from the slice to `xi`.
pub fn jump_jacobian(xi: f64, xi_fix: f64, p_match: f64) -> f64 {
    growth_factor(xi, p_match) / growth_factor(xi_fix, p_match)
}

fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    -LN_SQRT_2PI - sd.ln() - 0.5 * ((x - mean) / sd).powi(2)
}

/// Proposed state and log acceptance ratio for leaving the slice with shape
/// `xi_prop`.
pub fn full_proposal(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    xi_prop: f64,
    xi_tilde: f64,
    s_xi: f64,
    p_match: f64,
) -> (ChainState, f64) {
    let theta = GpdParams {
        mu: state.theta.mu,
        sigma: matched_scale(state.theta.sigma, spec.xi_fix, xi_prop, p_match),
        xi: xi_prop,
    };
    let prop = ChainState::new(spec, sample, theta, false);
    let log_delta = prop.log_post - state.log_post
        - ln_normal_pdf(xi_prop, xi_tilde, s_xi)
        - jump_jacobian(xi_prop, spec.xi_fix, p_match).ln();
    (prop, log_delta)
}

/// Proposed state and log acceptance ratio for moving onto the slice.
pub fn mass_proposal(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    xi_tilde: f64,
    s_xi: f64,
    p_match: f64,
) -> (ChainState, f64) {
    let xi_t = state.theta.xi;
    let theta = GpdParams {
        mu: state.theta.mu,
        sigma: matched_scale(state.theta.sigma, xi_t, spec.xi_fix, p_match),
        xi: spec.xi_fix,
    };
    let prop = ChainState::new(spec, sample, theta, true);
    let log_delta = prop.log_post - state.log_post
        + ln_normal_pdf(xi_t, xi_tilde, s_xi)
        + jump_jacobian(xi_t, spec.xi_fix, p_match).ln();
    (prop, log_delta)
}

pub(crate) fn accept<R: Rng + ?Sized>(current_lp: f64, prop_lp: f64, log_delta: f64, rng: &mut R) -> bool {
    if prop_lp == f64::NEG_INFINITY || log_delta.is_nan() {
        return false;
    }
    if current_lp == f64::NEG_INFINITY || log_delta >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_delta
}

/// Attempts the move off the slice. Returns the new state and whether it
/// was accepted.
pub fn jump_to_full<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    xi_tilde: f64,
    s_xi: f64,
    p_match: f64,
    rng: &mut R,
) -> (ChainState, bool) {
    debug_assert!(state.in_point_mass);
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let (prop, log_delta) = full_proposal(state, spec, sample, xi_tilde + s_xi * z, xi_tilde, s_xi, p_match);
    if accept(state.log_post, prop.log_post, log_delta, rng) {
        (prop, true)
    } else {
        (state.clone(), false)
    }
}

/// Attempts the deterministic move onto the slice.
pub fn jump_to_mass<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &PriorSpec,
    sample: &[f64],
    xi_tilde: f64,
    s_xi: f64,
    p_match: f64,
    rng: &mut R,
) -> (ChainState, bool) {
    debug_assert!(!state.in_point_mass);
    let (prop, log_delta) = mass_proposal(state, spec, sample, xi_tilde, s_xi, p_match);
    if accept(state.log_post, prop.log_post, log_delta, rng) {
        (prop, true)
    } else {
        (state.clone(), false)
    }
}
