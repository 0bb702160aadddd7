//! Relative-error statistics and resampling helpers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfStats {
    pub nbias: f64,
    pub sd: f64,
    pub nmse: f64,
    pub k: usize,
}

pub fn relative_errors(estimates: &[f64], truths: &[f64]) -> Result<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(invalid(format!("{} estimates for {} truths", estimates.len(), truths.len())));
    }
    if let Some(t) = truths.iter().find(|t| !(**t > 0.0)) {
        return Err(invalid(format!("true values must be positive, got {t}")));
    }
    Ok(estimates.iter().zip(truths).map(|(e, t)| (e - t) / t).collect())
}

pub fn perf_stats(estimates: &[f64], truths: &[f64]) -> Result<PerfStats> {
    let r = relative_errors(estimates, truths)?;
    perf_from_relative(&r)
}

pub fn perf_from_relative(r: &[f64]) -> Result<PerfStats> {
    let k = r.len();
    if k < 2 {
        return Err(invalid(format!("need at least 2 estimates, got {k}")));
    }
    let kf = k as f64;
    let nbias = r.iter().sum::<f64>() / kf;
    let ss = r.iter().map(|e| (e - nbias).powi(2)).sum::<f64>();
    let nmse = r.iter().map(|e| e * e).sum::<f64>() / kf;
    Ok(PerfStats { nbias, sd: (ss / (kf - 1.0)).sqrt(), nmse, k })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Bootstrap standard error of the mean of `values`.
pub fn bootstrap_se<R: Rng + ?Sized>(values: &[f64], resamples: usize, rng: &mut R) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let m = mean(&means);
    (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// Percentile interval for `mean(a) - mean(b)` resampling pairs jointly.
pub fn paired_bootstrap_ci<R: Rng + ?Sized>(a: &[f64], b: &[f64], resamples: usize, level: f64, rng: &mut R) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("paired bootstrap needs two equal-length samples of size >= 2"));
    }
    let n = a.len();
    let mut diffs: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..n {
                let i = rng.random_range(0..n);
                s += a[i] - b[i];
            }
            s / n as f64
        })
        .collect();
    diffs.sort_by(|x, y| x.total_cmp(y));
    let tail = 0.5 * (1.0 - level);
    let pick = |p: f64| diffs[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((pick(tail), pick(1.0 - tail)))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Intercept and slope of the least-squares line of `y` on `x`.
pub fn ols_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("regression needs two equal-length samples of size >= 2"));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("regressor has no spread"));
    }
    let slope = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / sxx;
    Ok((my - slope * mx, slope))
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
