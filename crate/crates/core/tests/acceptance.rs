//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 3`.

mod common;

use std::time::Instant;

use rand::Rng;
use rjrfa::generator::{generate_region, RegionConfig, TARGET_ID};
use rjrfa::gpd::{lmom_to_params, params_to_lmom, GpdParams};
use rjrfa::lmoments::{heterogeneity_h1, regional_from_samples};
use rjrfa::prior::{fit_index_flood, PriorSpec};
use rjrfa::quadrature::integrate_1d;
use rjrfa::rjmcmc::{
    full_proposal, jump_jacobian, mass_proposal, matched_scale, p_match, run_chain, ChainConfig, ChainState, MoveSpec,
};
use rjrfa::rng::stream_rng;
use rjrfa::study::{
    bias_c_analysis, median, nmse_difference_ci, perf_stats, run_sensitivity, run_study, spearman, SensitivityConfig,
    StudyConfig,
};

use common::{batch_means, oracle, ToyPrior};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn conf1() -> GpdParams {
    GpdParams { mu: 0.64, sigma: 0.48, xi: 0.26 }
}

fn toy() -> (ToyPrior, PriorSpec, Vec<f64>) {
    let gamma = [0.0, 0.0, 0.2];
    let d = [0.05, 0.05, 0.0225];
    let spec = PriorSpec::new(gamma, d, 0.25, 0.5).unwrap();
    let sample = GpdParams { mu: 1.0, sigma: 1.0, xi: 0.2 }.sample(20, &mut stream_rng(2024, 0));
    (ToyPrior { gamma, d, xi_fix: 0.25, p: 0.5 }, spec, sample)
}

fn criterion_1() -> Outcome {
    let (pr, spec, sample) = toy();
    let o = oracle(&sample, &pr, 0.95, 40);
    let cfg = ChainConfig { n_iter: 55_000, burn_in: 5_000, jump_prob: 0.5 };
    let trace = run_chain(&spec, &sample, &cfg, &MoveSpec::default(), &mut stream_rng(7, 0)).unwrap();
    let ind: Vec<f64> = trace.states.iter().map(|s| s.in_point_mass as u8 as f64).collect();
    let q: Vec<f64> = trace.states.iter().map(|s| s.theta.quantile_unchecked(0.95)).collect();
    let (pm, pse) = batch_means(&ind, 50);
    let (qm, qse) = batch_means(&q, 50);
    let ok = (pm - o.p_slice).abs() < 3.0 * pse && (qm - o.mean_q).abs() < 3.0 * qse;
    outcome(
        ok,
        format!(
            "slice prob chain {pm:.4} (se {pse:.4}) vs quadrature {:.4}; mean Q0.95 chain {qm:.4} (se {qse:.4}) vs quadrature {:.4}",
            o.p_slice, o.mean_q
        ),
    )
}

fn criterion_2() -> Outcome {
    let (_, spec, sample) = toy();
    let pm = p_match(sample.len());
    let mut rng = stream_rng(8, 0);
    let mut worst_q: f64 = 0.0;
    for _ in 0..10_000 {
        let mu = 0.3 + 0.6 * rng.random::<f64>();
        let sigma = 0.5 + rng.random::<f64>();
        let xi_t = -0.4 + 1.2 * rng.random::<f64>();
        let xi_p = -0.4 + 1.2 * rng.random::<f64>();
        let a = GpdParams { mu, sigma, xi: xi_t };
        let b = GpdParams { mu, sigma: matched_scale(sigma, xi_t, xi_p, pm), xi: xi_p };
        let (qa, qb) = (a.quantile(pm).unwrap(), b.quantile(pm).unwrap());
        worst_q = worst_q.max((qa - qb).abs() / qa.abs().max(1.0));
    }
    let mut worst_j: f64 = 0.0;
    for i in 0..200 {
        let xi = -0.4 + 1.2 * i as f64 / 199.0;
        let h = 1e-6;
        let d = (matched_scale(1.0 + h, spec.xi_fix, xi, pm) - matched_scale(1.0 - h, spec.xi_fix, xi, pm)) / (2.0 * h);
        worst_j = worst_j.max((jump_jacobian(xi, spec.xi_fix, pm) - 1.0 / d).abs());
    }
    let mut worst_r: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 100 {
        let mu = 0.5 + 0.4 * rng.random::<f64>();
        let sigma = 0.7 + 0.6 * rng.random::<f64>();
        let on = ChainState::new(&spec, &sample, GpdParams { mu, sigma, xi: spec.xi_fix }, true);
        let xi = 0.2 + 0.15 * (rng.random::<f64>() - 0.5) * 4.0;
        let (off, fwd) = full_proposal(&on, &spec, &sample, xi, 0.22, 0.1, pm);
        if !on.log_post.is_finite() || !off.log_post.is_finite() {
            continue;
        }
        let (_, bwd) = mass_proposal(&off, &spec, &sample, 0.22, 0.1, pm);
        worst_r = worst_r.max((fwd + bwd).exp_m1().abs());
        pairs += 1;
    }
    outcome(
        worst_q < 1e-10 && worst_j < 1e-6 && worst_r < 1e-9,
        format!("max quantile drift {worst_q:.2e}; max Jacobian error {worst_j:.2e}; max |fwd*bwd - 1| {worst_r:.2e}"),
    )
}

fn sensitivity_region(target: usize) -> RegionConfig {
    RegionConfig::new(conf1(), 19, 70, target)
}

fn criterion_3() -> Outcome {
    let cfg = SensitivityConfig {
        name: "slice-occupancy".into(),
        region: sensitivity_region(60),
        n_regions: 50,
        p_grid: vec![1.0 / 8.0, 0.5, 2.0 / 3.0],
        r_shape_grid: vec![1.0, -0.5],
        probs: vec![0.95],
        chain: ChainConfig { n_iter: 5_000, burn_in: 1_000, jump_prob: 0.5 },
        seed: 31,
    };
    let res = run_sensitivity(&cfg).unwrap();
    let m = |r: f64, p: f64| res.cell(r, p).unwrap().mean_mass_fraction;
    let (a, b, c) = (m(1.0, 1.0 / 8.0), m(1.0, 0.5), m(1.0, 2.0 / 3.0));
    let neg = m(-0.5, 0.5);
    let neg_median = median(&res.cell(-0.5, 0.5).unwrap().mass_fractions);
    outcome(
        b > 0.5 && neg < 0.05 && a <= b && b <= c,
        format!(
            "ratio 1: {a:.3} / {b:.3} / {c:.3} at p = 1/8, 1/2, 2/3; ratio -0.5 at p = 1/2: mean {neg:.4}, median {neg_median:.4}"
        ),
    )
}

fn desk_study(name: &str, estimators: &[&str], n_regions: usize, probs: Vec<f64>, seed: u64) -> StudyConfig {
    StudyConfig {
        name: name.into(),
        region: RegionConfig::new(conf1(), 9, 50, 10),
        n_regions,
        estimators: estimators.iter().map(|s| s.to_string()).collect(),
        probs,
        chain: ChainConfig { n_iter: 5_000, burn_in: 500, jump_prob: 0.5 },
        seed,
        nsim: 500,
        p_xi: None,
        xi_fix: None,
    }
}

fn criterion_4() -> Outcome {
    let cfg = desk_study("conf1-desk", &["rev", "bay", "ifl"], 200, vec![0.75, 0.95, 0.995], 41);
    let res = run_study(&cfg).unwrap();
    let n = |e: &str, p: f64| res.row(e, p).unwrap().nmse;
    let (lo, hi) = nmse_difference_ci(&res, "rev", "bay", 0.995, 0.90).unwrap();
    let ok = n("rev", 0.995) < n("bay", 0.995) && hi < 0.0 && n("bay", 0.75) < n("ifl", 0.75);
    outcome(
        ok,
        format!(
            "NMSE Q0.995 rev {:.4} bay {:.4} (diff 90% CI [{lo:.4}, {hi:.4}]); NMSE Q0.75 bay {:.4} ifl {:.4}",
            n("rev", 0.995),
            n("bay", 0.995),
            n("bay", 0.75),
            n("ifl", 0.75)
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = desk_study("index-bias", &["ifl"], 400, vec![0.95], 51);
    let res = run_study(&cfg).unwrap();
    let fit = &bias_c_analysis(&res, 0.95).unwrap()[0];
    outcome(
        fit.n >= 300 && (fit.slope - 1.0).abs() <= 0.1,
        format!("slope {:.3} over {} replicates", fit.slope, fit.n),
    )
}

fn criterion_6() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let cfg = SensitivityConfig {
        name: "slice-probability".into(),
        region: sensitivity_region(10),
        n_regions: 100,
        p_grid: grid.clone(),
        r_shape_grid: vec![1.0],
        probs: vec![0.75, 0.995],
        chain: ChainConfig { n_iter: 5_000, burn_in: 500, jump_prob: 0.5 },
        seed: 61,
    };
    let res = run_sensitivity(&cfg).unwrap();
    let med: Vec<f64> = res.cells.iter().map(|c| c.quantiles[0].median_nbias).collect();
    let width: Vec<f64> = res.cells.iter().map(|c| c.quantiles[1].mean_rel_width).collect();
    let spread = med.iter().copied().fold(f64::NEG_INFINITY, f64::max) - med.iter().copied().fold(f64::INFINITY, f64::min);
    let rho = spearman(&grid, &width);
    outcome(
        spread < 0.05 && rho <= -0.9,
        format!("median NBIAS Q0.75 spread {spread:.4}; rank correlation of Q0.995 interval width with p {rho:.3}"),
    )
}

fn criterion_7() -> Outcome {
    let cfg = RegionConfig::new(conf1(), 9, 50, 10);
    let mut r2 = Vec::new();
    let mut below = 0usize;
    for r in 0..500u64 {
        let region = generate_region(&cfg, &mut stream_rng(71, r)).unwrap();
        r2.push(fit_index_flood(&region.sites, Some(TARGET_ID)).unwrap().r2);
        let lm = regional_from_samples(region.sites.iter().map(|s| (s.id.as_str(), s.exceedances.as_slice()))).unwrap();
        let h = heterogeneity_h1(&lm, 500, &mut stream_rng(72, r)).unwrap();
        below += (h.h1 < 1.0) as usize;
    }
    let mean = r2.iter().sum::<f64>() / r2.len() as f64;
    let frac = below as f64 / 500.0;
    outcome(
        (mean - 0.89).abs() <= 0.05 && frac > 0.5,
        format!("mean r2 {mean:.3}; share of regions with H1 < 1 {frac:.3}"),
    )
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut worst: f64 = 0.0;
    for &xi in &[-0.45, -0.2, 0.0, 1e-9, 0.15, 0.26, 0.6] {
        let g = GpdParams { mu: 0.5, sigma: 1.3, xi };
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = g.quantile(p).unwrap();
            worst = worst.max((g.cdf(x).unwrap() - p).abs());
        }
    }
    ok &= worst < 1e-10;
    notes.push(format!("cdf(quantile) {worst:.1e}"));

    let mut lw: f64 = 0.0;
    let mut qw: f64 = 0.0;
    for &xi in &[-0.4, -0.1, 0.0, 0.08, 0.26, 0.45] {
        let g = GpdParams { mu: 0.64, sigma: 0.48, xi };
        let lm = params_to_lmom(&g).unwrap();
        let back = lmom_to_params(&lm).unwrap();
        lw = lw.max((back.mu - g.mu).abs()).max((back.sigma - g.sigma).abs()).max((back.xi - g.xi).abs());
        // probability-weighted moments by quadrature of x(1 - e^-t) e^-t over t
        let tmax = 60.0 / (1.0 - xi);
        let q = |t: f64| if xi == 0.0 { g.mu + g.sigma * t } else { g.mu + g.sigma * (xi * t).exp_m1() / xi };
        let b = |r: i32| integrate_1d(|t| q(t) * (-(-t).exp_m1()).powi(r) * (-t).exp(), 0.0, tmax, 400, 16);
        let (b0, b1, b2) = (b(0), b(1), b(2));
        let l2 = 2.0 * b1 - b0;
        let l3 = 6.0 * b2 - 6.0 * b1 + b0;
        qw = qw.max((b0 - lm.l1).abs()).max((l2 / b0 - lm.tau).abs()).max((l3 / l2 - lm.tau3).abs());
    }
    ok &= lw < 1e-10 && qw < 1e-6;
    notes.push(format!("L-moment round trip {lw:.1e}, vs quadrature {qw:.1e}"));

    let spec = PriorSpec::new([0.3, -0.4, 0.2], [0.04, 0.09, 0.02], 0.25, 0.4).unwrap();
    let mut rng = stream_rng(81, 0);
    let m = 1_000_000;
    let half = 6.0;
    let (su, sv) = (spec.d[0].sqrt(), spec.d[1].sqrt());
    let area = (2.0 * half * su) * (2.0 * half * sv);
    let mut acc = 0.0;
    for _ in 0..m {
        // uniform draws on the (log mu, log sigma) box
        let lm = spec.gamma[0] + half * su * (2.0 * rng.random::<f64>() - 1.0);
        let ls = spec.gamma[1] + half * sv * (2.0 * rng.random::<f64>() - 1.0);
        acc += area * (spec.log_initial(lm.exp(), ls.exp(), spec.xi_fix) + lm + ls).exp();
    }
    let mc = acc / m as f64;
    let rel = (mc / spec.log_norm_const.exp() - 1.0).abs();
    ok &= rel < 0.01;
    notes.push(format!("slice normalizer vs Monte Carlo {rel:.1e}"));

    let mut rng = stream_rng(82, 0);
    let mut pw: f64 = 0.0;
    for _ in 0..200 {
        let k = rng.random_range(2..80);
        let t: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
        let e: Vec<f64> = t.iter().map(|x| x * (0.5 + rng.random::<f64>())).collect();
        let s = perf_stats(&e, &t).unwrap();
        let kf = k as f64;
        pw = pw.max((s.nmse - (s.nbias * s.nbias + s.sd * s.sd * (kf - 1.0) / kf)).abs());
    }
    ok &= pw < 1e-12;
    notes.push(format!("NMSE identity {pw:.1e}"));

    let mut cfg = desk_study("repro", &["rev", "bay", "ifl"], 6, vec![0.75, 0.995], 83);
    cfg.chain = ChainConfig { n_iter: 1_500, burn_in: 300, jump_prob: 0.5 };
    cfg.nsim = 100;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let r = run_study(&cfg).unwrap();
            let mut buf = Vec::new();
            r.write_csv(&mut buf).unwrap();
            buf
        })
    };
    let same = run(1) == run(4) && run(1) == run(1);
    ok &= same;
    notes.push(format!("serial and parallel study CSVs identical: {same}"));
    outcome(ok, notes.join("; "))
}

fn main() {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "two-model posterior vs quadrature", criterion_1),
        (2, "quantile matching and jump identities", criterion_2),
        (3, "slice occupancy by shape ratio", criterion_3),
        (4, "desk-scale estimator ordering", criterion_4),
        (5, "index-flood error slope", criterion_5),
        (6, "stationarity in slice probability", criterion_6),
        (7, "generator calibration", criterion_7),
        (8, "numerical invariants", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {id} [{name}]: {} ({:.1}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
