//! Gauss–Legendre quadrature: cached rules, composite panels, and a simple
//! adaptive bisection driver.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut sum = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            sum += w * f(mid + half * x);
        }
        sum * half
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Cached `n`-point rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussLegendre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(GaussLegendre::compute(n)))
        .clone()
}

/// Composite rule: `panels` equal panels of an `order`-point rule.
pub fn integrate_panels(
    a: f64,
    b: f64,
    panels: usize,
    order: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let rule = gauss_legendre(order);
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + h * p as f64;
        sum += rule.integrate(lo, lo + h, &mut f);
    }
    sum
}

/// Adaptive bisection using a 16-point rule against its two-half refinement.
/// Returns `(value, estimated_error)`; the error is large if `max_depth`
/// was hit before the tolerance.
pub fn integrate_adaptive(
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
    f: &dyn Fn(f64) -> f64,
) -> (f64, f64) {
    let rule = gauss_legendre(16);
    let whole = rule.integrate(a, b, f);
    adapt(&rule, a, b, whole, abs_tol, max_depth, f)
}

fn adapt(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    f: &dyn Fn(f64) -> f64,
) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, f);
    let right = rule.integrate(mid, b, f);
    let err = (left + right - whole).abs();
    if err <= tol || depth == 0 {
        return (left + right, err);
    }
    let (l, el) = adapt(rule, a, mid, left, 0.5 * tol, depth - 1, f);
    let (r, er) = adapt(rule, mid, b, right, 0.5 * tol, depth - 1, f);
    (l + r, el + er)
}
