//! Radial helpers: ball and sphere constants, spherical averages of plane
//! waves, and adaptively tabulated radial profiles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::quad::gauss_legendre;

/// Lebesgue measure of the unit ball in `d` dimensions.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Surface measure `|S^{d-1}|` of the unit sphere in `d` dimensions.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * ball_volume(d)
}

/// Average of `cos(z ⟨u, e⟩)` over the unit sphere `u ∈ S^{n-1}`.
///
/// `n = 1` gives `cos z`, `n = 2` gives `J₀(z)`, `n = 3` gives `sin z / z`.
/// For `n ≥ 2` the average is `∫ cos(z sin θ) cos^{n-2} θ dθ` over
/// `[-π/2, π/2]` normalised by its value at `z = 0`; the integrand is entire,
/// so Gauss–Legendre in `θ` converges geometrically once the node count
/// exceeds the oscillation count.
pub fn sphere_average(n: usize, z: f64) -> f64 {
    assert!(n >= 1);
    let z = z.abs();
    match n {
        1 => z.cos(),
        3 => {
            if z < 1e-4 {
                let z2 = z * z;
                1.0 - z2 / 6.0 + z2 * z2 / 120.0
            } else {
                z.sin() / z
            }
        }
        _ => {
            let nodes = 32 + z.ceil() as usize;
            let rule = gauss_legendre(nodes);
            let p = (n - 2) as i32;
            let v = rule.integrate(-PI / 2.0, PI / 2.0, |th| {
                (z * th.sin()).cos() * th.cos().powi(p)
            });
            v / wallis(n - 2)
        }
    }
}

/// `∫_{-π/2}^{π/2} cos^k θ dθ = √π Γ((k+1)/2) / Γ(k/2 + 1)`.
fn wallis(k: usize) -> f64 {
    let k = k as f64;
    (0.5 * PI.ln() + ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0 + 1.0)).exp()
}

/// Radial profile of the inverse transform of the normalised ball indicator,
/// `|B|^{-1} ∫_B e^{iω·x} dω`, at `|x| = r`. Equal to the plane-wave average
/// over `S^{d+1}` (Archimedes' projection).
pub fn ball_kernel_profile(d: usize, r: f64) -> f64 {
    sphere_average(d + 2, r)
}

/// `∫_{|y| ≤ support} f(|y|) e^{i x·y} dy` for a radial `f`, at `|x| = s`.
pub fn radial_plane_wave_integral(
    d: usize,
    support: f64,
    s: f64,
    profile: &(dyn Fn(f64) -> f64 + Sync),
) -> f64 {
    let osc = (s * support / PI).ceil() as usize;
    let panels = 8 + osc;
    let rule = gauss_legendre(24);
    let h = support / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = h * p as f64;
        for (r, w) in rule.mapped(lo, lo + h) {
            sum += w * profile(r) * r.powi(d as i32 - 1) * sphere_average(d, s * r);
        }
    }
    sum * sphere_area(d)
}

/// Spectral density (under `f(x) = ∫ f̂(ω) e^{iω·x} dω`) of a radial function
/// supported in `[0, support]`, evaluated at `|ω| = s`.
pub fn radial_inverse_transform_density(
    d: usize,
    support: f64,
    s: f64,
    profile: &(dyn Fn(f64) -> f64 + Sync),
) -> f64 {
    radial_plane_wave_integral(d, support, s, profile) / (2.0 * PI).powi(d as i32)
}

/// A radial profile tabulated on a uniform grid of `[0, r_max]` with local
/// cubic (four-point Lagrange) interpolation. The grid is doubled until the
/// interpolation error at midpoints falls below the tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialTable {
    r_max: f64,
    step: f64,
    values: Vec<f64>,
    /// Largest midpoint error observed in the last refinement pass.
    pub midpoint_error: f64,
}

impl RadialTable {
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn build(
        r_max: f64,
        tol: f64,
        max_nodes: usize,
        f: &(dyn Fn(f64) -> f64 + Sync),
    ) -> Self {
        assert!(r_max > 0.0);
        let mut n_int = 64usize;
        let mut values: Vec<f64> = (0..=n_int)
            .into_par_iter()
            .map(|i| f(r_max * i as f64 / n_int as f64))
            .collect();
        loop {
            let step = r_max / n_int as f64;
            let current = Self {
                r_max,
                step,
                values: values.clone(),
                midpoint_error: f64::INFINITY,
            };
            let mids: Vec<f64> = (0..n_int)
                .into_par_iter()
                .map(|i| f(step * (i as f64 + 0.5)))
                .collect();
            let err = mids
                .iter()
                .enumerate()
                .map(|(i, v)| (current.eval(step * (i as f64 + 0.5)) - v).abs())
                .fold(0.0, f64::max);
            let mut merged = Vec::with_capacity(2 * n_int + 1);
            for i in 0..n_int {
                merged.push(values[i]);
                merged.push(mids[i]);
            }
            merged.push(values[n_int]);
            values = merged;
            n_int *= 2;
            if err < tol || n_int + 1 > max_nodes {
                return Self {
                    r_max,
                    step: r_max / n_int as f64,
                    values,
                    midpoint_error: err,
                };
            }
        }
    }

    /// Build from uniformly spaced samples `values[i] = f(i·r_max/(n-1))`.
    pub fn from_uniform(r_max: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 4);
        let step = r_max / (values.len() - 1) as f64;
        Self {
            r_max,
            step,
            values,
            midpoint_error: f64::NAN,
        }
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Interpolated value; `r` is clamped into `[0, r_max]`. Even extension
    /// is used below zero, matching radial symmetry.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs().min(self.r_max);
        let n = self.values.len();
        let x = r / self.step;
        let i = (x.floor() as isize).clamp(0, n as isize - 2);
        let start = (i - 1).clamp(0, n as isize - 4) as usize;
        let mut acc = 0.0;
        for j in 0..4 {
            let xj = (start + j) as f64;
            let mut l = 1.0;
            for m in 0..4 {
                if m != j {
                    let xm = (start + m) as f64;
                    l *= (x - xm) / (xj - xm);
                }
            }
            acc += l * self.values[start + j];
        }
        acc
    }
}
