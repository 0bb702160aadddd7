//! Gauss–Legendre quadrature: nodes, composite rules, and a refinement loop
//! that doubles the panel count until the estimate stabilizes.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule: `panels` equal sub-intervals of [a, b] with `order`
/// points each. Returns (abscissae, weights).
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (ti, wi) in t.iter().zip(&w) {
            xs.push(lo + 0.5 * h * (ti + 1.0));
            ws.push(0.5 * h * wi);
        }
    }
    (xs, ws)
}

pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = composite_rule(a, b, panels, order);
    xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum()
}

/// Tensor-product composite rule over a rectangle.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    (ax, bx): (f64, f64),
    (ay, by): (f64, f64),
    panels: usize,
    order: usize,
) -> f64 {
    let (xs, wx) = composite_rule(ax, bx, panels, order);
    let (ys, wy) = composite_rule(ay, by, panels, order);
    let mut total = 0.0;
    for (&x, &w1) in xs.iter().zip(&wx) {
        let mut row = 0.0;
        for (&y, &w2) in ys.iter().zip(&wy) {
            row += w2 * f(x, y);
        }
        total += w1 * row;
    }
    total
}

/// Result of a refined integration.
#[derive(Debug, Clone, Copy)]
pub struct Refined {
    pub value: f64,
    pub panels: usize,
    /// Absolute change between the last two refinements.
    pub change: f64,
}

/// Doubles the panel count of a 2-D tensor rule until successive estimates
/// agree to `rel_tol`, or `max_panels` is reached.
pub fn integrate_2d_refined<F: Fn(f64, f64) -> f64>(
    f: F,
    xr: (f64, f64),
    yr: (f64, f64),
    order: usize,
    rel_tol: f64,
    max_panels: usize,
) -> Refined {
    let mut panels = 4;
    let mut prev = integrate_2d(&f, xr, yr, panels, order);
    loop {
        let next_panels = panels * 2;
        let cur = integrate_2d(&f, xr, yr, next_panels, order);
        let change = (cur - prev).abs();
        panels = next_panels;
        if change <= rel_tol * cur.abs() || panels >= max_panels {
            return Refined { value: cur, panels, change };
        }
        prev = cur;
    }
}
