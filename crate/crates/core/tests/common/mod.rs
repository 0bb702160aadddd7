//! Quadrature oracle for the two-model posterior of a small sample, written
//! from the densities directly and independent of the library's prior and
//! likelihood code.
#![allow(dead_code)]

use rayon::prelude::*;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub struct ToyPrior {
    pub gamma: [f64; 3],
    pub d: [f64; 3],
    pub xi_fix: f64,
    pub p: f64,
}

fn ln_norm(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (LN_2PI + v.ln() + (x - m) * (x - m) / v)
}

fn loglik(x: &[f64], mu: f64, sigma: f64, xi: f64) -> f64 {
    let mut acc = -(x.len() as f64) * sigma.ln();
    for &v in x {
        let z = (v - mu) / sigma;
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if xi.abs() < 1e-12 {
            acc -= z;
        } else {
            let t = 1.0 + xi * z;
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc -= (1.0 / xi + 1.0) * t.ln();
        }
    }
    acc
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Golub-Welsch-free Newton
/// iteration on the Legendre recurrence.
fn gl(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn panels(edges: &[f64], rule: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = 0.5 * (b - a);
        for &(x, wt) in rule {
            pts.push((a + h * (x + 1.0), h * wt));
        }
    }
    pts
}

fn uniform_edges(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

pub struct OracleResult {
    /// Posterior probability of the slice.
    pub p_slice: f64,
    /// Posterior mean of the `q_prob` quantile.
    pub mean_q: f64,
    /// Posterior mean of the shape.
    pub mean_xi: f64,
}

fn growth(xi: f64, prob: f64) -> f64 {
    let y = 1.0 - prob;
    if xi.abs() < 1e-12 {
        -y.ln()
    } else {
        (y.powf(-xi) - 1.0) / xi
    }
}

/// Integral over location of `f(mu)` times the location prior and the
/// likelihood, at fixed scale and shape; returns (mass, mass * E[mu]).
fn location_integral(x: &[f64], pr: &ToyPrior, sigma: f64, xi: f64, reference: f64, rule: &[(f64, f64)]) -> (f64, f64) {
    let min_x = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max_x = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lower: f64 = 1e-9;
    if xi < 0.0 {
        lower = lower.max(max_x + sigma / xi);
    }
    if lower >= min_x {
        return (0.0, 0.0);
    }
    let range = min_x - lower;
    // geometric panels toward the sample minimum, where the integrand peaks
    let a = (sigma / (8.0 * x.len() as f64)).min(range);
    let mut edges = vec![0.0];
    let mut t = a;
    while t < range {
        edges.push(t);
        t *= 2.0;
    }
    edges.push(range);
    let mut mass = 0.0;
    let mut first = 0.0;
    for (t, w) in panels(&edges, rule) {
        let mu = min_x - t;
        if mu <= 0.0 {
            continue;
        }
        let lf = ln_norm(mu.ln(), pr.gamma[0], pr.d[0]) - mu.ln() + loglik(x, mu, sigma, xi) - reference;
        let f = w * lf.exp();
        mass += f;
        first += f * mu;
    }
    (mass, first)
}

/// Two-model posterior by nested composite Gauss-Legendre quadrature over
/// (log scale, shape) and location; `outer_panels` sets the resolution.
pub fn oracle(x: &[f64], pr: &ToyPrior, q_prob: f64, outer_panels: usize) -> OracleResult {
    let rule8 = gl(8);
    let rule16 = gl(16);
    let (s_lo, s_hi) = (pr.gamma[1] - 8.0 * pr.d[1].sqrt(), pr.gamma[1] + 8.0 * pr.d[1].sqrt());
    let (x_lo, x_hi) = ((pr.gamma[2] - 8.0 * pr.d[2].sqrt()).max(-0.99), pr.gamma[2] + 8.0 * pr.d[2].sqrt());
    let s_pts = panels(&uniform_edges(s_lo, s_hi, outer_panels), &rule8);
    let xi_pts = panels(&uniform_edges(x_lo, x_hi, outer_panels), &rule8);
    let min_x = x.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = loglik(x, min_x - 0.02, pr.gamma[1].exp(), pr.gamma[2]);

    // full space: (1 - p) * prior * likelihood
    let full: Vec<(f64, f64, f64)> = xi_pts
        .par_iter()
        .map(|&(xi, wx)| {
            let mut acc = (0.0, 0.0, 0.0);
            for &(s, ws) in &s_pts {
                let sigma = s.exp();
                let (m, m_mu) = location_integral(x, pr, sigma, xi, reference, &rule16);
                let w = wx * ws * (ln_norm(s, pr.gamma[1], pr.d[1]) + ln_norm(xi, pr.gamma[2], pr.d[2])).exp();
                acc.0 += w * m;
                acc.1 += w * (m_mu + m * sigma * growth(xi, q_prob));
                acc.2 += w * m * xi;
            }
            acc
        })
        .collect();
    let (zf, qf, xf) = full.iter().fold((0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let (zf, qf, xf) = ((1.0 - pr.p) * zf, (1.0 - pr.p) * qf, (1.0 - pr.p) * xf);

    // slice: the shape density cancels against its normalizer
    let mut z0 = 0.0;
    let mut q0 = 0.0;
    for &(s, ws) in &s_pts {
        let sigma = s.exp();
        let (m, m_mu) = location_integral(x, pr, sigma, pr.xi_fix, reference, &rule16);
        let w = ws * ln_norm(s, pr.gamma[1], pr.d[1]).exp();
        z0 += w * m;
        q0 += w * (m_mu + m * sigma * growth(pr.xi_fix, q_prob));
    }
    let (z0, q0) = (pr.p * z0, pr.p * q0);
    let z = z0 + zf;
    OracleResult { p_slice: z0 / z, mean_q: (q0 + qf) / z, mean_xi: (z0 * pr.xi_fix + xf) / z }
}

/// Batch-means estimate of the mean and its Monte-Carlo standard error.
pub fn batch_means(v: &[f64], batches: usize) -> (f64, f64) {
    let size = v.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| v[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (v.iter().sum::<f64>() / v.len() as f64, (var / batches as f64).sqrt())
}
