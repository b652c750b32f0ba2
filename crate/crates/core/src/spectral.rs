//! Fourier-side objects of the convolution/martingale decomposition: scale
//! integrals of the seed spectrum, the cumulative spectral mass `T`, the
//! kernels `K̂_W` and `K̂_{Z,t}`, the dyadic search for an admissible
//! constant `a`, and the decomposition residual.
//!
//! Everything here is isotropic, so frequencies are passed as radii `|ω|`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{Mollifier, SeedKernel};
use crate::quad::{gauss_legendre, integrate_adaptive};
use crate::radial::{ball_volume, sphere_area};

/// A nonnegative radial spectral density with a provenance label.
#[derive(Clone)]
pub struct SpectralDensity {
    dimension: usize,
    label: String,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    origin: f64,
}

impl fmt::Debug for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralDensity")
            .field("label", &self.label)
            .field("dimension", &self.dimension)
            .field("origin", &self.origin)
            .finish()
    }
}

impl SpectralDensity {
    /// `origin` is the radial limit at `ω = 0` (may be `+∞`).
    pub fn new(
        dimension: usize,
        label: impl Into<String>,
        origin: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            dimension,
            label: label.into(),
            eval: Arc::new(eval),
            origin,
        }
    }

    pub fn zero(dimension: usize) -> Self {
        Self::new(dimension, "zero", 0.0, |_| 0.0)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Density at `|ω| = s`; at `s = 0` returns the radial limit.
    pub fn eval(&self, s: f64) -> f64 {
        if s == 0.0 {
            self.origin
        } else {
            (self.eval)(s.abs())
        }
    }

    pub fn eval_vec(&self, omega: &[f64]) -> f64 {
        self.eval(crate::kernels::norm(omega))
    }

    pub fn at_origin(&self) -> f64 {
        self.origin
    }

    /// `∫ f̂(ω) dω` over `|ω| ≤ s_max`, i.e. the variance of the field. Panel edges are placed at the
    /// given kinks (plus `|ω| = 1`) so piecewise-smooth densities integrate
    /// to full accuracy.
    pub fn total_mass(&self, s_max: f64, kinks: &[f64]) -> f64 {
        let d = self.dimension as i32;
        let area = sphere_area(self.dimension);
        // log-spaced panels resolve both small-|ω| plateaus and long tails
        let mut edges = vec![0.0, 1e-6];
        let mut x = 1e-6;
        while x < s_max {
            x = (x * 1.25).min(s_max);
            edges.push(x);
        }
        for &k in kinks.iter().chain(std::iter::once(&1.0)) {
            if k > 1e-6 && k < s_max {
                edges.push(k);
            }
        }
        edges.sort_by(|a, b| a.total_cmp(b));
        edges.dedup();
        let rule = gauss_legendre(16);
        area * edges
            .windows(2)
            .map(|w| rule.integrate(w[0], w[1], |s| self.eval(s) * s.powi(d - 1)))
            .sum::<f64>()
    }
}

/// `T(ω) = ∫_{|ξ| ≤ |ω|} K̂(ξ) dξ` at `|ω| = s`. Exactly 1 for `s ≥ 1` when the
/// kernel satisfies the compact-spectrum condition.
pub fn script_t(k: &SeedKernel, s: f64) -> f64 {
    let s = s.abs();
    let d = k.dimension() as i32;
    if k.k3_compliant() && s >= 1.0 {
        return 1.0;
    }
    if k.is_ball() {
        return s.min(1.0).powi(d);
    }
    if s == 0.0 {
        return 0.0;
    }
    let top = s.min(k.hat_support_radius());
    let (v, _) = integrate_adaptive(0.0, top, 1e-14, 30, &|u| {
        k.radial_hat_eval(u) * u.powi(d - 1)
    });
    sphere_area(k.dimension()) * v
}

/// `K̂_t(ω) = ∫₀^t K̂(e^{-u} ω) e^{-du} du` at `|ω| = s`; `t` may be `+∞`.
pub fn k_hat_t(k: &SeedKernel, s: f64, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(invalid("t", format!("must be nonnegative, got {t}")));
    }
    let d = k.dimension() as f64;
    let s = s.abs();
    if t == 0.0 {
        return Ok(0.0);
    }
    let decay = (-d * t).exp();
    if s == 0.0 {
        return Ok(k.radial_hat_eval(0.0) * (1.0 - decay) / d);
    }
    if k.is_ball() {
        // closed form per radial shell: K̂(e^{-u}ω) ≠ 0 iff u ≥ log|ω|
        let u0 = s.ln().max(0.0);
        if u0 >= t {
            return Ok(0.0);
        }
        return Ok(((-d * u0).exp() - decay) / (d * ball_volume(k.dimension())));
    }
    // substitute v = e^{-u} s: |ω|^{-d} ∫_{s e^{-t}}^{s} K̂(v) v^{d-1} dv
    let lo = s * (-t).exp();
    let hi = s.min(k.hat_support_radius());
    if lo >= hi {
        return Ok(0.0);
    }
    let di = k.dimension() as i32;
    let tol = 1e-13 * s.powi(di);
    let (v, err) = integrate_adaptive(lo, hi, tol, 40, &|v| k.radial_hat_eval(v) * v.powi(di - 1));
    if err > 1e3 * tol.max(1e-300) {
        return Err(Error::Quadrature { omega: s, error: err });
    }
    Ok(v / s.powi(di))
}

/// Spectral density of the martingale approximation `X*_t`.
pub fn spectrum_kt(k: &SeedKernel, t: f64) -> Result<SpectralDensity> {
    if t.is_nan() || t < 0.0 {
        return Err(invalid("t", format!("must be nonnegative, got {t}")));
    }
    let origin = k_hat_t(k, 0.0, t)?;
    let kk = k.clone();
    Ok(SpectralDensity::new(
        k.dimension(),
        format!("K_t(t={t})"),
        origin,
        move |s| k_hat_t(&kk, s, t).unwrap_or(f64::NAN),
    ))
}

/// Spectral density of the increment `X*_t − X*_s`, `s ≤ t`.
pub fn spectrum_increment(k: &SeedKernel, s: f64, t: f64) -> Result<SpectralDensity> {
    if !(s >= 0.0 && t >= s) {
        return Err(invalid("t", format!("need 0 ≤ s ≤ t, got s={s}, t={t}")));
    }
    let origin = k_hat_t(k, 0.0, t)? - k_hat_t(k, 0.0, s)?;
    let kk = k.clone();
    Ok(SpectralDensity::new(
        k.dimension(),
        format!("K_t−K_s(s={s}, t={t})"),
        origin,
        move |w| match (k_hat_t(&kk, w, t), k_hat_t(&kk, w, s)) {
            (Ok(a), Ok(b)) => (a - b).max(0.0),
            _ => f64::NAN,
        },
    ))
}

fn require_nonzero(s: f64, what: &'static str) -> Result<f64> {
    if s == 0.0 {
        Err(Error::ZeroFrequency(what))
    } else {
        Ok(s.abs())
    }
}

fn require_k3(k: &SeedKernel) -> Result<()> {
    if k.k3_compliant() {
        Ok(())
    } else {
        Err(invalid(
            "kernel",
            format!("{} does not have a spectrum supported in the unit ball", k.id()),
        ))
    }
}

/// `K̂^ρ_t(ω) = |ρ̂(a e^{-t} ω)|² K̂(ω)`, the spectrum of the convolution
/// approximation at `ε = a e^{-t}`.
pub fn k_hat_conv(k: &SeedKernel, m: &Mollifier, a: f64, t: f64, s: f64) -> Result<f64> {
    let s = require_nonzero(s, "the convolution spectrum")?;
    let r = m.hat_radial(a * (-t).exp() * s);
    Ok(r * r * k_hat_t(k, s, f64::INFINITY)?)
}

pub fn spectrum_conv(k: &SeedKernel, m: &Mollifier, a: f64, t: f64) -> Result<SpectralDensity> {
    require_k3(k)?;
    check_a(a)?;
    let origin = k_hat_t(k, 0.0, f64::INFINITY)?;
    let (kk, mm) = (k.clone(), m.clone());
    Ok(SpectralDensity::new(
        k.dimension(),
        format!("K^rho(a={a}, t={t})"),
        origin,
        move |s| k_hat_conv(&kk, &mm, a, t, s).unwrap_or(f64::NAN),
    ))
}

fn check_a(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(invalid("a", format!("must lie in (0, 1), got {a}")))
    }
}

/// `K̂_W(ω) = |S^{d-1}|^{-1} |ω|^{-d} (T(ω) − (1 − |ρ̂(aω)|²))`.
pub fn k_hat_w(k: &SeedKernel, m: &Mollifier, a: f64, s: f64) -> Result<f64> {
    let s = require_nonzero(s, "K_W")?;
    Ok(w_terms(k, m, a, s).value())
}

/// `K̂_{W,t}(ω) = e^{-dt} K̂_W(e^{-t} ω)`.
pub fn k_hat_w_t(k: &SeedKernel, m: &Mollifier, a: f64, t: f64, s: f64) -> Result<f64> {
    let s = require_nonzero(s, "K_W,t")?;
    let d = k.dimension() as f64;
    Ok((-d * t).exp() * w_terms(k, m, a, (-t).exp() * s).value())
}

/// `K̂_{Z,t}(ω) = |S^{d-1}|^{-1} |ω|^{-d} (1 − |ρ̂(a e^{-t} ω)|²)(1 − T(ω))`.
pub fn k_hat_z(k: &SeedKernel, m: &Mollifier, a: f64, t: f64, s: f64) -> Result<f64> {
    let s = require_nonzero(s, "K_Z,t")?;
    Ok(z_terms(k, m, a, t, s).value())
}

/// `Δ̂^ρ_t(ω) = e^{-dt} K̂(e^{-t}ω) − (1 − |ρ̂(a e^{-t}ω)|²) K̂(ω)` with `K̂`
/// from the scale integral (not from `T`).
pub fn delta_hat(k: &SeedKernel, m: &Mollifier, a: f64, t: f64, s: f64) -> Result<f64> {
    let s = require_nonzero(s, "Δ̂")?;
    let d = k.dimension() as f64;
    let shrink = (-t).exp();
    let full_shifted = k_hat_t(k, shrink * s, f64::INFINITY)?;
    let full = k_hat_t(k, s, f64::INFINITY)?;
    Ok((-d * t).exp() * full_shifted - m.one_minus_hat_sq(a * shrink * s) * full)
}

/// The two terms inside `K̂_W`'s bracket, with the prefactor, so a
/// roundoff-scaled sign test is possible.
struct Terms {
    prefactor: f64,
    positive: f64,
    negative: f64,
}

impl Terms {
    fn value(&self) -> f64 {
        self.prefactor * (self.positive - self.negative)
    }

    fn magnitude(&self) -> f64 {
        self.prefactor * (self.positive.abs() + self.negative.abs())
    }
}

fn w_terms(k: &SeedKernel, m: &Mollifier, a: f64, s: f64) -> Terms {
    let d = k.dimension();
    Terms {
        prefactor: 1.0 / (sphere_area(d) * s.powi(d as i32)),
        positive: script_t(k, s),
        negative: m.one_minus_hat_sq(a * s),
    }
}

fn z_terms(k: &SeedKernel, m: &Mollifier, a: f64, t: f64, s: f64) -> Terms {
    let d = k.dimension();
    let v = m.one_minus_hat_sq(a * (-t).exp() * s) * (1.0 - script_t(k, s));
    Terms {
        prefactor: 1.0 / (sphere_area(d) * s.powi(d as i32)),
        positive: v,
        negative: 0.0,
    }
}

/// Radius used to evaluate radial limits at the origin.
const ORIGIN_PROBE: f64 = 1e-5;

/// Spectral density of `W_t`, `K̂_{W,t}`.
pub fn spectrum_w_t(k: &SeedKernel, m: &Mollifier, a: f64, t: f64) -> Result<SpectralDensity> {
    require_k3(k)?;
    check_a(a)?;
    let origin = k_hat_w_t(k, m, a, t, ORIGIN_PROBE)?;
    let (kk, mm) = (k.clone(), m.clone());
    Ok(SpectralDensity::new(
        k.dimension(),
        format!("K_W,t(a={a}, t={t})"),
        origin,
        move |s| k_hat_w_t(&kk, &mm, a, t, s).unwrap_or(f64::NAN),
    ))
}

/// Spectral density of `Z_t`, `K̂_{Z,t}`.
pub fn spectrum_z_t(k: &SeedKernel, m: &Mollifier, a: f64, t: f64) -> Result<SpectralDensity> {
    require_k3(k)?;
    check_a(a)?;
    let origin = k_hat_z(k, m, a, t, ORIGIN_PROBE)?;
    let (kk, mm) = (k.clone(), m.clone());
    Ok(SpectralDensity::new(
        k.dimension(),
        format!("K_Z,t(a={a}, t={t})"),
        origin,
        move |s| k_hat_z(&kk, &mm, a, t, s).unwrap_or(f64::NAN),
    ))
}

// ---------------------------------------------------------------------------
// Scans and certificates

/// Radial frequency scan: log-spaced nodes in `(lo, hi]` plus a linear band
/// around the support boundary where `T` has a kink.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrequencyScan {
    pub lo: f64,
    pub hi: f64,
    pub log_nodes: usize,
    pub band: (f64, f64),
    pub band_nodes: usize,
}

impl Default for FrequencyScan {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 1e3,
            log_nodes: 901,
            band: (0.8, 1.2),
            band_nodes: 401,
        }
    }
}

impl FrequencyScan {
    pub fn nodes(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.log_nodes + self.band_nodes);
        let (llo, lhi) = (self.lo.ln(), self.hi.ln());
        for i in 0..self.log_nodes {
            // (lo, hi]: skip the left endpoint
            let f = (i + 1) as f64 / self.log_nodes as f64;
            v.push((llo + f * (lhi - llo)).exp());
        }
        for i in 0..self.band_nodes {
            let f = i as f64 / (self.band_nodes.max(2) - 1) as f64;
            v.push(self.band.0 + f * (self.band.1 - self.band.0));
        }
        v.retain(|s| *s > 0.0);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.log_nodes >= 2) {
            return Err(invalid("scan", "need 0 < lo < hi and at least two log nodes"));
        }
        Ok(())
    }
}

/// Default certification t-grid.
pub const DEFAULT_T_GRID: [f64; 6] = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];

/// Relative roundoff tolerance applied per scan node (see [`DecompositionCertificate`]).
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeCertificate {
    pub t: f64,
    pub identity_residual: f64,
    pub min_kz: f64,
    pub sup_kz: f64,
    /// Inverse transform of `K̂_{Z,t}` at 0, i.e. `E[Z_t²]`.
    pub z_variance: f64,
}

/// Outcome of the admissible-constant search.
///
/// A scan node counts as nonnegative when its value is at least
/// `−tol · (|positive term| + |negative term|) · prefactor`, a roundoff-scaled
/// sign test; the absolute minima are recorded alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionCertificate {
    pub a_const: f64,
    pub kernel_id: String,
    pub mollifier_id: String,
    pub t_grid: Vec<f64>,
    pub per_t: Vec<TimeCertificate>,
    pub identity_residual: f64,
    pub min_kw: f64,
    pub min_kz: f64,
    pub tol: f64,
    pub scan_spec: FrequencyScan,
    pub valid: bool,
    pub attempts: u32,
}

impl DecompositionCertificate {
    pub fn identity_residual_at(&self, t: f64) -> Option<f64> {
        self.per_t.iter().find(|c| c.t == t).map(|c| c.identity_residual)
    }
}

struct Worst {
    omega: f64,
    value: f64,
    component: &'static str,
}

fn scan_min(
    nodes: &[f64],
    tol: f64,
    component: &'static str,
    f: impl Fn(f64) -> Terms + Sync,
) -> (f64, Option<Worst>) {
    let terms: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&s| {
            let t = f(s);
            (t.value(), t.magnitude())
        })
        .collect();
    let mut min = f64::INFINITY;
    let mut worst: Option<Worst> = None;
    for (s, (v, mag)) in nodes.iter().zip(terms) {
        min = min.min(v);
        let slack = v + tol * mag;
        if slack < 0.0 && worst.as_ref().is_none_or(|w| v < w.value) {
            worst = Some(Worst {
                omega: *s,
                value: v,
                component,
            });
        }
    }
    (min, worst)
}

/// Largest `a = 2^{-j}`, `j = 1..=40`, for which `K̂_W` and every `K̂_{Z,t}`
/// on the t-grid are nonnegative over the scan.
pub fn find_admissible_a(
    k: &SeedKernel,
    m: &Mollifier,
    scan: &FrequencyScan,
    tol: f64,
    t_grid: &[f64],
) -> Result<DecompositionCertificate> {
    require_k3(k)?;
    scan.validate()?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("t_grid", "must be a nonempty list of nonnegative times"));
    }
    if k.dimension() != m.dimension() {
        return Err(invalid("mollifier", "dimension differs from the kernel's"));
    }
    const MAX_EXPONENT: u32 = 40;
    let nodes = scan.nodes();
    let mut last_worst = None;
    for j in 1..=MAX_EXPONENT {
        let a = 0.5f64.powi(j as i32);
        match scan_constant(k, m, &nodes, tol, t_grid, a, true) {
            (_, _, Some(w)) => last_worst = Some(w),
            (min_kw, min_kz, None) => {
                return certificate(k, m, scan, &nodes, tol, t_grid, a, min_kw, min_kz, true, j)
            }
        }
    }
    let w = last_worst.expect("loop ran at least once");
    Err(Error::NoAdmissibleConstant {
        max_exponent: MAX_EXPONENT,
        worst_omega: w.omega,
        worst_value: w.value,
        component: w.component,
    })
}

/// Certificate for a user-chosen `a`; `valid` is false when `K̂_W` or some
/// `K̂_{Z,t}` fails the sign test.
pub fn certify_constant(
    k: &SeedKernel,
    m: &Mollifier,
    scan: &FrequencyScan,
    tol: f64,
    t_grid: &[f64],
    a: f64,
) -> Result<DecompositionCertificate> {
    require_k3(k)?;
    scan.validate()?;
    check_a(a)?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(invalid("t_grid", "must be a nonempty list of nonnegative times"));
    }
    if k.dimension() != m.dimension() {
        return Err(invalid("mollifier", "dimension differs from the kernel's"));
    }
    let nodes = scan.nodes();
    let (min_kw, min_kz, worst) = scan_constant(k, m, &nodes, tol, t_grid, a, false);
    certificate(k, m, scan, &nodes, tol, t_grid, a, min_kw, min_kz, worst.is_none(), 1)
}

/// Minima of `K̂_W` and `K̂_{Z,t}` over the scan and the worst failing node.
/// With `stop_early` the t-loop ends at the first failure.
fn scan_constant(
    k: &SeedKernel,
    m: &Mollifier,
    nodes: &[f64],
    tol: f64,
    t_grid: &[f64],
    a: f64,
    stop_early: bool,
) -> (f64, f64, Option<Worst>) {
    let (min_kw, mut worst) = scan_min(nodes, tol, "K_W", |s| w_terms(k, m, a, s));
    let mut min_kz = f64::INFINITY;
    if worst.is_some() && stop_early {
        return (min_kw, min_kz, worst);
    }
    for &t in t_grid {
        let (mz, wz) = scan_min(nodes, tol, "K_Z,t", |s| z_terms(k, m, a, t, s));
        min_kz = min_kz.min(mz);
        if worst.is_none() {
            worst = wz;
        }
        if worst.is_some() && stop_early {
            break;
        }
    }
    (min_kw, min_kz, worst)
}

#[allow(clippy::too_many_arguments)]
fn certificate(
    k: &SeedKernel,
    m: &Mollifier,
    scan: &FrequencyScan,
    nodes: &[f64],
    tol: f64,
    t_grid: &[f64],
    a: f64,
    min_kw: f64,
    min_kz: f64,
    valid: bool,
    attempts: u32,
) -> Result<DecompositionCertificate> {
    let mut per_t = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let rows = identity_rows(k, m, a, t, nodes)?;
        let identity_residual = max_residual(&rows);
        let min_kz_t = rows.iter().map(|r| r.k_z).fold(f64::INFINITY, f64::min);
        let sup_kz = rows.iter().map(|r| r.k_z).fold(0.0, f64::max);
        per_t.push(TimeCertificate {
            t,
            identity_residual,
            min_kz: min_kz_t,
            sup_kz,
            z_variance: z_variance(k, m, a, t),
        });
    }
    let identity_residual = per_t.iter().map(|c| c.identity_residual).fold(0.0, f64::max);
    Ok(DecompositionCertificate {
        a_const: a,
        kernel_id: k.id().to_string(),
        mollifier_id: m.id().to_string(),
        t_grid: t_grid.to_vec(),
        per_t,
        identity_residual,
        min_kw,
        min_kz,
        tol,
        scan_spec: scan.clone(),
        valid,
        attempts,
    })
}

/// `E[Z_t²] = ∫ K̂_{Z,t}`; the density vanishes outside the unit ball.
pub fn z_variance(k: &SeedKernel, m: &Mollifier, a: f64, t: f64) -> f64 {
    let d = k.dimension() as i32;
    let area = sphere_area(k.dimension());
    let rule = gauss_legendre(32);
    let panels = 64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = p as f64 / panels as f64;
        let hi = (p + 1) as f64 / panels as f64;
        sum += rule.integrate(lo, hi, |s| {
            if s == 0.0 {
                0.0
            } else {
                z_terms(k, m, a, t, s).value() * s.powi(d - 1)
            }
        });
    }
    area * sum
}

/// One scan node of the decomposition identity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityRow {
    pub omega: f64,
    pub k_w_t: f64,
    pub k_z: f64,
    pub delta: f64,
}

impl IdentityRow {
    pub fn residual(&self) -> f64 {
        (self.delta - self.k_w_t - self.k_z).abs()
    }
}

pub fn identity_rows(
    k: &SeedKernel,
    m: &Mollifier,
    a: f64,
    t: f64,
    nodes: &[f64],
) -> Result<Vec<IdentityRow>> {
    if nodes.contains(&0.0) {
        return Err(Error::ZeroFrequency("the identity scan"));
    }
    nodes
        .par_iter()
        .map(|&s| {
            Ok(IdentityRow {
                omega: s,
                k_w_t: k_hat_w_t(k, m, a, t, s)?,
                k_z: k_hat_z(k, m, a, t, s)?,
                delta: delta_hat(k, m, a, t, s)?,
            })
        })
        .collect()
}

pub fn max_residual(rows: &[IdentityRow]) -> f64 {
    rows.iter().map(IdentityRow::residual).fold(0.0, f64::max)
}

/// Maximum of `|Δ̂^ρ_t − K̂_{W,t} − K̂_{Z,t}|` over the scan.
pub fn verify_identity(
    k: &SeedKernel,
    m: &Mollifier,
    a: f64,
    t: f64,
    scan: &FrequencyScan,
) -> Result<f64> {
    Ok(max_residual(&identity_rows(k, m, a, t, &scan.nodes())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::standard_mollifier;

    #[test]
    fn script_t_examples() {
        let k = SeedKernel::ball(1).unwrap();
        assert_eq!(script_t(&k, 1.5), 1.0);
        assert!((script_t(&k, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(script_t(&k, 0.0), 0.0);
        let k2 = SeedKernel::ball(2).unwrap();
        assert!((script_t(&k2, 0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scale_integral_examples() {
        let k = SeedKernel::ball(1).unwrap();
        assert_eq!(k_hat_t(&k, 0.7, 0.0).unwrap(), 0.0);
        assert!((k_hat_t(&k, 2.0, f64::INFINITY).unwrap() - 0.25).abs() < 1e-15);
        assert!(k_hat_t(&k, 2.0, -1.0).is_err());
    }

    #[test]
    fn kt_has_mass_t() {
        // K_t(0) = t: integrate the density over frequency
        for d in [1, 2] {
            let k = SeedKernel::ball(d).unwrap();
            for t in [0.5, 1.0, 3.0] {
                let dens = spectrum_kt(&k, t).unwrap();
                let mass = dens.total_mass(t.exp() * 1.01, &[t.exp()]);
                assert!((mass - t).abs() < 1e-8, "d={d} t={t} mass={mass}");
            }
        }
    }

    #[test]
    fn conv_depends_on_a_e_minus_t_only() {
        let k = SeedKernel::ball(1).unwrap();
        let m = standard_mollifier(1, 1).unwrap();
        let a = 0.25;
        let t = 1.3;
        for s in [0.1, 0.9, 4.0] {
            let x = k_hat_conv(&k, &m, a, t, s).unwrap();
            let y = k_hat_conv(&k, &m, a * (-t).exp(), 0.0, s).unwrap();
            assert!((x - y).abs() < 1e-15);
        }
        assert!(k_hat_conv(&k, &m, a, t, 0.0).is_err());
        // large t: ρ̂ ≈ 1 and the spectrum reduces to K̂(2) = 0.25
        assert!((k_hat_conv(&k, &m, 0.5, 30.0, 2.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kw_above_one_is_rho_hat_squared() {
        let k = SeedKernel::ball(2).unwrap();
        let m = standard_mollifier(2, 1).unwrap();
        let a = 0.5;
        for s in [1.0, 1.7, 12.0] {
            let expect = m.hat_radial(a * s).powi(2) / (2.0 * std::f64::consts::PI * s * s);
            assert!((k_hat_w(&k, &m, a, s).unwrap() - expect).abs() < 1e-15);
        }
        assert!(matches!(k_hat_w(&k, &m, a, 0.0), Err(Error::ZeroFrequency(_))));
    }

    #[test]
    fn kz_support_and_vanishing() {
        let k = SeedKernel::ball(1).unwrap();
        let m = standard_mollifier(1, 1).unwrap();
        assert_eq!(k_hat_z(&k, &m, 0.5, 0.0, 1.2).unwrap(), 0.0);
        for s in [0.05, 0.3, 0.9] {
            let v0 = k_hat_z(&k, &m, 0.5, 0.0, s).unwrap();
            let v = k_hat_z(&k, &m, 0.5, 1e6, s).unwrap();
            assert!(v <= 1e-6 * v0);
        }
    }

    #[test]
    fn scan_covers_band_and_excludes_zero() {
        let nodes = FrequencyScan::default().nodes();
        assert!(nodes[0] > 0.0);
        assert!(nodes.contains(&1.0));
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert!((nodes.last().unwrap() - 1e3).abs() < 1e-9);
    }
}
