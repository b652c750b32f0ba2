//! Seed covariance kernels, mollifiers, and the truncated kernels used by the
//! finite-range comparison machinery.
//!
//! Fourier convention: covariances and their spectral densities are related by
//! `f(x) = ∫ f̂(ω) e^{iω·x} dω`, so the variance of a stationary field equals
//! the integral of its density. Mollifier transforms use the characteristic
//! normalisation `ρ̂(ω) = ∫ ρ(x) e^{-iω·x} dx`, so `ρ̂(0) = 1` for unit mass.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::{gauss_legendre, integrate_panels};
use crate::radial::{
    ball_kernel_profile, ball_volume, radial_inverse_transform_density,
    radial_plane_wave_integral, sphere_area, RadialTable,
};

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Classical bump `exp(-1/(1-r²))` on the unit ball.
pub(crate) fn unit_bump(r: f64) -> f64 {
    let r2 = r * r;
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

#[derive(Clone)]
enum KernelRepr {
    Ball,
    Truncated {
        base: Arc<SeedKernel>,
        delta: f64,
        cutoff: Arc<CutoffProfile>,
        hat_table: Arc<OnceLock<RadialTable>>,
    },
    Custom {
        radial: RadialFn,
        hat: RadialFn,
    },
}

/// A radial positive-definite seed covariance with `K(0) = 1`, together with
/// its radial spectral profile and the constants that certify its decay and
/// small-frequency behaviour.
#[derive(Clone)]
pub struct SeedKernel {
    dimension: usize,
    id: String,
    repr: KernelRepr,
    hat_support_radius: f64,
    decay: (f64, f64),
    trihat: (f64, f64),
    k3_compliant: bool,
}

impl fmt::Debug for SeedKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SeedKernel")
            .field("id", &self.id)
            .field("dimension", &self.dimension)
            .field("hat_support_radius", &self.hat_support_radius)
            .field("decay", &self.decay)
            .field("trihat", &self.trihat)
            .field("k3_compliant", &self.k3_compliant)
            .finish()
    }
}

/// Parameters for [`SeedKernel::custom`].
pub struct CustomKernel {
    pub dimension: usize,
    pub id: String,
    pub radial: RadialFn,
    pub hat: RadialFn,
    pub hat_support_radius: f64,
    pub decay: (f64, f64),
    pub trihat: (f64, f64),
    pub k3_compliant: bool,
}

impl SeedKernel {
    /// Kernel whose spectral density is the normalised indicator of the unit
    /// ball: `K̂ = |B|^{-1} 1_{|ω| ≤ 1}`.
    pub fn ball(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let a = (d as f64 + 1.0) / 2.0;
        Ok(Self {
            dimension: d,
            id: format!("ball(d={d})"),
            repr: KernelRepr::Ball,
            hat_support_radius: 1.0,
            decay: (ball_decay_constant(d, a), a),
            // T(ω) = |ω|^d exactly below 1; the bounds leave 10% slack
            trihat: (0.9, 1.1),
            k3_compliant: true,
        })
    }

    /// Arbitrary radial kernel from closures. No invariant is enforced here;
    /// run [`validate_seed`] to certify one.
    pub fn custom(spec: CustomKernel) -> Self {
        Self {
            dimension: spec.dimension,
            id: spec.id,
            repr: KernelRepr::Custom {
                radial: spec.radial,
                hat: spec.hat,
            },
            hat_support_radius: spec.hat_support_radius,
            decay: spec.decay,
            trihat: spec.trihat,
            k3_compliant: spec.k3_compliant,
        }
    }

    /// Load from the two-column text format (`radius,value`) with a one-line
    /// header naming the column: `radius,hat` for a spectral profile or
    /// `radius,kernel` for a physical-space profile.
    pub fn from_table_file(path: &Path, d: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_table_text(&text, d, &path.display().to_string())
    }

    pub fn from_table_text(text: &str, d: usize, id: &str) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty kernel table".into()))?;
        let column = header
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .nth(1)
            .map(|s| s.trim_start_matches('#').to_ascii_lowercase())
            .ok_or_else(|| Error::Format(format!("bad header `{header}`")))?;
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(Error::Format(format!("line {}: expected two columns", lineno + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
            };
            radii.push(parse(cols[0])?);
            values.push(parse(cols[1])?);
        }
        if radii.len() < 4 {
            return Err(Error::Format("table needs at least four rows".into()));
        }
        let r_max = *radii.last().unwrap();
        let uniform = radii.windows(2).all(|w| {
            let step = r_max / (radii.len() - 1) as f64;
            ((w[1] - w[0]) - step).abs() < 1e-9 * r_max
        });
        if radii[0] != 0.0 || !uniform {
            return Err(Error::Format(
                "radii must start at 0 and be uniformly spaced".into(),
            ));
        }
        let table = Arc::new(RadialTable::from_uniform(r_max, values.clone()));
        match column.as_str() {
            "hat" => {
                let t = table.clone();
                let hat: RadialFn = Arc::new(move |s| if s > r_max { 0.0 } else { t.eval(s) });
                let h2 = hat.clone();
                let radial: RadialFn = Arc::new(move |r| {
                    radial_plane_wave_integral(d, r_max, r, &|s| h2(s))
                });
                let k3 = r_max <= 1.0 + 1e-12 && values.iter().all(|v| *v >= 0.0);
                let trihat = fitted_trihat(d, hat.as_ref(), r_max);
                let a = 0.5;
                let decay = (fitted_decay(radial.as_ref(), a, 60.0), a);
                Ok(Self::custom(CustomKernel {
                    dimension: d,
                    id: format!("table:{id}"),
                    radial,
                    hat,
                    hat_support_radius: r_max,
                    decay,
                    trihat,
                    k3_compliant: k3,
                }))
            }
            "kernel" => {
                let t = table.clone();
                let radial: RadialFn = Arc::new(move |r| if r > r_max { 0.0 } else { t.eval(r) });
                let r2 = radial.clone();
                let hat: RadialFn = Arc::new(move |s| {
                    radial_inverse_transform_density(d, r_max, s, &|r| r2(r))
                });
                let a = 0.5;
                let decay = (fitted_decay(radial.as_ref(), a, r_max), a);
                Ok(Self::custom(CustomKernel {
                    dimension: d,
                    id: format!("table:{id}"),
                    radial,
                    hat,
                    hat_support_radius: f64::INFINITY,
                    decay,
                    trihat: (0.0, f64::INFINITY),
                    k3_compliant: false,
                }))
            }
            other => Err(Error::Format(format!(
                "unknown table column `{other}` (expected `hat` or `kernel`)"
            ))),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.repr, KernelRepr::Ball)
    }

    pub fn k3_compliant(&self) -> bool {
        self.k3_compliant
    }

    pub fn hat_support_radius(&self) -> f64 {
        self.hat_support_radius
    }

    pub fn decay_constants(&self) -> (f64, f64) {
        self.decay
    }

    pub fn trihat_bounds(&self) -> (f64, f64) {
        self.trihat
    }

    /// `K(x)` at `|x| = r`.
    pub fn radial_eval(&self, r: f64) -> f64 {
        match &self.repr {
            KernelRepr::Ball => ball_kernel_profile(self.dimension, r),
            KernelRepr::Truncated {
                base,
                delta,
                cutoff,
                ..
            } => {
                let c = cutoff.eval(delta * r);
                if c == 0.0 {
                    0.0
                } else {
                    base.radial_eval(r) * c
                }
            }
            KernelRepr::Custom { radial, .. } => radial(r.abs()),
        }
    }

    /// `K̂(ω)` at `|ω| = s`.
    pub fn radial_hat_eval(&self, s: f64) -> f64 {
        let s = s.abs();
        match &self.repr {
            KernelRepr::Ball => {
                if s <= 1.0 {
                    1.0 / ball_volume(self.dimension)
                } else {
                    0.0
                }
            }
            KernelRepr::Truncated { delta, hat_table, .. } => {
                let table = hat_table.get_or_init(|| {
                    let support = 1.0 / delta;
                    let s_max = self.truncated_hat_extent();
                    RadialTable::build(s_max, 1e-10, 1 << 12, &|w| {
                        radial_inverse_transform_density(self.dimension, support, w, &|r| {
                            self.radial_eval(r)
                        })
                    })
                });
                if s > table.r_max() {
                    0.0
                } else {
                    table.eval(s)
                }
            }
            KernelRepr::Custom { hat, .. } => hat(s),
        }
    }

    /// Frequency beyond which the truncated kernel's spectrum is treated as 0.
    fn truncated_hat_extent(&self) -> f64 {
        match &self.repr {
            KernelRepr::Truncated { base, delta, .. } => {
                base.hat_support_radius.min(1e3) + 60.0 * delta
            }
            _ => self.hat_support_radius,
        }
    }

    /// The base kernel and cutoff scale when this kernel is a truncation.
    pub fn truncation(&self) -> Option<(&SeedKernel, f64)> {
        match &self.repr {
            KernelRepr::Truncated { base, delta, .. } => Some((base.as_ref(), *delta)),
            _ => None,
        }
    }

    /// Compact support radius in physical space, when there is one.
    pub fn physical_support(&self) -> Option<f64> {
        self.truncation().map(|(_, delta)| 1.0 / delta)
    }
}

fn ball_decay_constant(d: usize, a: f64) -> f64 {
    let k = |r: f64| ball_kernel_profile(d, r);
    fitted_decay(&k, a, 120.0)
}

fn fitted_decay(k: &dyn Fn(f64) -> f64, a: f64, r_max: f64) -> f64 {
    let n = (r_max * 20.0) as usize;
    let worst = (0..=n)
        .map(|i| {
            let r = r_max * i as f64 / n as f64;
            k(r).abs() * (1.0 + r).powf(a)
        })
        .fold(0.0, f64::max);
    1.05 * worst
}

fn fitted_trihat(d: usize, hat: &dyn Fn(f64) -> f64, s_max: f64) -> (f64, f64) {
    let area = sphere_area(d);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut acc = 0.0;
    let n = 400;
    let top = s_max.min(1.0);
    let rule = gauss_legendre(8);
    for i in 0..n {
        let a = top * i as f64 / n as f64;
        let b = top * (i + 1) as f64 / n as f64;
        acc += area * rule.integrate(a, b, |s| hat(s) * s.powi(d as i32 - 1));
        let ratio = acc / b.powi(d as i32);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    (0.9 * lo, 1.1 * hi)
}

/// Smooth radial bump `φ` supported in `B(0, 1/2)` normalised so `∫ φ² = 1`,
/// and its autocorrelation `χ = φ * φ`, tabulated on `[0, 1]`.
#[derive(Debug)]
pub struct CutoffProfile {
    pub dimension: usize,
    bump_scale: f64,
    table: RadialTable,
}

impl CutoffProfile {
    pub fn new(d: usize) -> Self {
        let raw = |r: f64| unit_bump(2.0 * r);
        let area = sphere_area(d);
        let norm2 = area
            * integrate_panels(0.0, 0.5, 8, 32, |r| raw(r).powi(2) * r.powi(d as i32 - 1));
        let bump_scale = 1.0 / norm2.sqrt();
        let phi = move |r: f64| bump_scale * raw(r);
        let table = RadialTable::build(1.0, 1e-10, 1 << 13, &|r| autocorrelation(d, &phi, r));
        Self {
            dimension: d,
            bump_scale,
            table,
        }
    }

    /// `φ(x)` at `|x| = r`.
    pub fn bump(&self, r: f64) -> f64 {
        self.bump_scale * unit_bump(2.0 * r)
    }

    /// `χ(x) = (φ * φ)(x)` at `|x| = r`; zero for `r ≥ 1`.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= 1.0 {
            0.0
        } else {
            self.table.eval(r)
        }
    }
}

/// `(φ * φ)(x)` for radial `φ` supported in `B(0, 1/2)`, at `|x| = r`.
fn autocorrelation(d: usize, phi: &dyn Fn(f64) -> f64, r: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    if d == 1 {
        let lo = r - 0.5;
        return integrate_panels(lo, 0.5, 8, 32, |y| phi(y.abs()) * phi((r - y).abs()));
    }
    // bipolar coordinates: |y| = s, angle θ between y and x
    let sphere_lower = if d == 2 { 2.0 } else { sphere_area(d - 1) };
    let inner = |s: f64| {
        integrate_panels(0.0, PI, 8, 24, |th| {
            let dist = (s * s + r * r - 2.0 * s * r * th.cos()).max(0.0).sqrt();
            phi(dist) * th.sin().powi(d as i32 - 2)
        })
    };
    sphere_lower * integrate_panels(0.0, 0.5, 8, 24, |s| phi(s) * s.powi(d as i32 - 1) * inner(s))
}

/// Multiply `k` by the cutoff `χ(δ·)`, producing a kernel supported in
/// `B(0, 1/δ)` with `K_δ(0) = K(0)`.
pub fn truncate_kernel(k: &SeedKernel, delta: f64) -> Result<SeedKernel> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    let cutoff = cutoff_profile(k.dimension);
    let a = k.decay.1;
    Ok(SeedKernel {
        dimension: k.dimension,
        id: format!("{}·χ(δ={delta})", k.id),
        repr: KernelRepr::Truncated {
            base: Arc::new(k.clone()),
            delta,
            cutoff,
            hat_table: Arc::new(OnceLock::new()),
        },
        hat_support_radius: f64::INFINITY,
        decay: (k.decay.0, a),
        trihat: (0.0, f64::INFINITY),
        k3_compliant: false,
    })
}

/// Shared cutoff profile per dimension (tabulating χ is the expensive part).
pub fn cutoff_profile(d: usize) -> Arc<CutoffProfile> {
    use std::collections::HashMap;
    use std::sync::Mutex;
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CutoffProfile>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().expect("cutoff cache").get(&d) {
        return c.clone();
    }
    let built = Arc::new(CutoffProfile::new(d));
    cache
        .lock()
        .expect("cutoff cache")
        .entry(d)
        .or_insert(built)
        .clone()
}

// ---------------------------------------------------------------------------
// Mollifiers

/// Compactly supported, radial, unit-mass profile. The transform is computed
/// from the one-dimensional projection `P(u) = ∫ ρ(u e₁ + v) dv` tabulated on a
/// fixed Gauss–Legendre grid of `[0, R]`, so `ρ̂(ω) = 2 ∫₀^R P(u) cos(|ω| u) du`.
#[derive(Clone)]
pub struct Mollifier {
    dimension: usize,
    id: String,
    support_radius: f64,
    profile: RadialFn,
    nodes: Arc<Vec<f64>>,
    /// quadrature weight × 2 P(u), renormalised so the weights sum to one
    weights: Arc<Vec<f64>>,
    mass_defect: f64,
}

impl fmt::Debug for Mollifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mollifier")
            .field("id", &self.id)
            .field("dimension", &self.dimension)
            .field("support_radius", &self.support_radius)
            .field("mass_defect", &self.mass_defect)
            .finish()
    }
}

const PROJECTION_PANELS: usize = 96;
const PROJECTION_ORDER: usize = 16;

impl Mollifier {
    /// Radial profile `ρ(r)` supported in `[0, support_radius]`. The profile
    /// is used as given; callers are responsible for unit mass.
    pub fn from_profile(
        d: usize,
        id: impl Into<String>,
        support_radius: f64,
        profile: RadialFn,
    ) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d", "dimension must be at least 1"));
        }
        if !(support_radius > 0.0) {
            return Err(invalid("support_radius", "must be positive"));
        }
        let rule = gauss_legendre(PROJECTION_ORDER);
        let h = support_radius / PROJECTION_PANELS as f64;
        let mut nodes = Vec::with_capacity(PROJECTION_PANELS * PROJECTION_ORDER);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for p in 0..PROJECTION_PANELS {
            let lo = h * p as f64;
            for (u, w) in rule.mapped(lo, lo + h) {
                nodes.push(u);
                weights.push(2.0 * w * projection(d, support_radius, profile.as_ref(), u));
            }
        }
        let total: f64 = weights.iter().sum();
        let mass_defect = total - 1.0;
        if total.abs() < 1e-12 {
            return Err(invalid("profile", "zero mass"));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self {
            dimension: d,
            id: id.into(),
            support_radius,
            profile,
            nodes: Arc::new(nodes),
            weights: Arc::new(weights),
            mass_defect,
        })
    }

    /// Linear combination `Σ c_k s_k^{-d} ψ(x/s_k)` of rescaled copies of the
    /// unit-mass bump `ψ ∝ exp(-1/(1-|x|²))`.
    pub fn from_scaled_bumps(d: usize, coefficients: &[f64], scales: &[f64]) -> Result<Self> {
        if coefficients.len() != scales.len() || coefficients.is_empty() {
            return Err(invalid("coefficients", "need one coefficient per scale"));
        }
        if scales.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("scales", "must be positive"));
        }
        let area = sphere_area(d);
        let mass = area * integrate_panels(0.0, 1.0, 16, 32, |r| unit_bump(r) * r.powi(d as i32 - 1));
        let coeffs: Vec<f64> = coefficients.to_vec();
        let sc: Vec<f64> = scales.to_vec();
        let support = sc.iter().cloned().fold(0.0, f64::max);
        let id = format!("bumps(c={coeffs:?}, s={sc:?})");
        let profile: RadialFn = Arc::new(move |r: f64| {
            coeffs
                .iter()
                .zip(&sc)
                .map(|(c, s)| c * unit_bump(r / s) / (mass * s.powi(d as i32)))
                .sum()
        });
        Self::from_profile(d, id, support, profile)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Relative deviation of the tabulated projection's mass from one before
    /// renormalisation.
    pub fn mass_defect(&self) -> f64 {
        self.mass_defect
    }

    /// `ρ(x)` at `|x| = r`.
    pub fn profile_eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.support_radius {
            0.0
        } else {
            (self.profile)(r)
        }
    }

    /// `ρ_ε(x) = ε^{-d} ρ(x/ε)`.
    pub fn scaled_profile_eval(&self, eps: f64, r: f64) -> f64 {
        self.profile_eval(r / eps) / eps.powi(self.dimension as i32)
    }

    /// `ρ̂(ω)` at `|ω| = s`; real because the profile is even.
    pub fn hat_radial(&self, s: f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(u, w)| w * (s * u).cos())
            .sum()
    }

    /// `ρ̂` at a frequency vector.
    pub fn hat_eval(&self, omega: &[f64]) -> f64 {
        self.hat_radial(norm(omega))
    }

    /// `1 − ρ̂(ω)`, accurate near the origin.
    pub fn one_minus_hat(&self, s: f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(|(u, w)| {
                let h = (0.5 * s * u).sin();
                2.0 * w * h * h
            })
            .sum()
    }

    /// `1 − |ρ̂(ω)|²`, accurate near the origin.
    pub fn one_minus_hat_sq(&self, s: f64) -> f64 {
        let m = self.one_minus_hat(s);
        m * (2.0 - m)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `P(u) = ∫_{ℝ^{d-1}} ρ(√(u² + |v|²)) dv`.
fn projection(d: usize, support: f64, profile: &dyn Fn(f64) -> f64, u: f64) -> f64 {
    if u >= support {
        return 0.0;
    }
    if d == 1 {
        return profile(u);
    }
    let top = (support * support - u * u).sqrt();
    let lower_area = if d == 2 { 2.0 } else { sphere_area(d - 1) };
    lower_area
        * integrate_panels(0.0, top, 4, 32, |v| {
            profile((u * u + v * v).sqrt()) * v.powi(d as i32 - 2)
        })
}

/// Even, smooth, compactly supported unit-mass mollifier with
/// `ρ̂(ω) = 1 − c|ω|^{2·order} + O(|ω|^{2·order+1})`, `c > 0`.
///
/// Built from `order` dyadically rescaled bumps whose weights cancel the
/// moments of order `2, 4, …, 2(order−1)`.
pub fn standard_mollifier(d: usize, order: usize) -> Result<Mollifier> {
    if d == 0 {
        return Err(invalid("d", "dimension must be at least 1"));
    }
    if order == 0 || 2 * order < d {
        return Err(invalid(
            "order",
            format!("need 2·order ≥ d for vanishing low-order derivatives (d={d}, order={order})"),
        ));
    }
    let scales: Vec<f64> = (0..order).map(|k| 0.5f64.powi(k as i32)).collect();
    let coefficients = moment_cancelling_weights(&scales);
    let mut m = Mollifier::from_scaled_bumps(d, &coefficients, &scales)?;
    m.id = format!("standard(d={d}, order={order})");
    Ok(m)
}

/// Solve `Σ c_k s_k^{2j} = δ_{j0}` for `j = 0..n−1` (Lagrange basis at 0 in
/// the variable `s²`).
fn moment_cancelling_weights(scales: &[f64]) -> Vec<f64> {
    let x: Vec<f64> = scales.iter().map(|s| s * s).collect();
    (0..x.len())
        .map(|k| {
            x.iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, xj)| (0.0 - xj) / (x[k] - xj))
                .product()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validation

/// One assumption check. `margin` is signed slack: non-negative when the check
/// holds, minus the worst violation otherwise. `None` means the scan was
/// vacuous on the supplied grid.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub margin: Option<f64>,
    pub scan_points: usize,
}

impl ValidationCheck {
    fn from_margin(name: &str, margin: Option<f64>, scan_points: usize) -> Self {
        Self {
            name: name.to_string(),
            passed: margin.is_none_or(|m| m >= 0.0),
            margin,
            scan_points,
        }
    }

    /// Magnitude of the worst violation (zero when the check holds).
    pub fn violation(&self) -> f64 {
        self.margin.map_or(0.0, |m| (-m).max(0.0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub subject: String,
    pub checks: Vec<ValidationCheck>,
    /// Scan resolution: number of grid points and smallest spacing.
    pub scan_points: usize,
    pub scan_min_spacing: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when every scan other than `K(0) = 1` had no admissible points.
    pub fn is_degenerate(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.name != "K1:unit_variance")
            .all(|c| c.margin.is_none())
    }
}

/// Tolerance for `K(0) = 1`.
pub const UNIT_VARIANCE_TOL: f64 = 1e-10;

/// Scan the (K1)–(K3) conditions on a strictly increasing radial grid.
/// The grid serves as both physical radii and frequency radii.
pub fn validate_seed(k: &SeedKernel, grid: &[f64]) -> Result<ValidationReport> {
    if grid.is_empty() {
        return Err(invalid("grid", "must be nonempty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] < 0.0 {
        return Err(invalid("grid", "radii must be nonnegative and strictly increasing"));
    }
    let d = k.dimension();
    let mut checks = Vec::new();

    let k0 = k.radial_eval(0.0);
    checks.push(ValidationCheck::from_margin(
        "K1:unit_variance",
        Some(UNIT_VARIANCE_TOL - (k0 - 1.0).abs()),
        1,
    ));

    // the origin is covered by the unit-variance check
    let scan: Vec<f64> = grid.iter().cloned().filter(|r| *r > 0.0).collect();
    let positive: Vec<f64> = scan.iter().map(|&s| k.radial_hat_eval(s)).collect();
    checks.push(ValidationCheck::from_margin(
        "K1:hat_nonnegative",
        positive.iter().cloned().reduce(f64::min),
        scan.len(),
    ));

    let (c, a) = k.decay_constants();
    let decay = scan
        .iter()
        .map(|&r| c * (1.0 + r).powf(-a) - k.radial_eval(r).abs())
        .reduce(f64::min);
    checks.push(ValidationCheck::from_margin("K2:decay", decay, scan.len()));

    if k.k3_compliant() {
        let outside: Vec<f64> = grid.iter().cloned().filter(|s| *s > 1.0).collect();
        let support = outside
            .iter()
            .map(|&s| -k.radial_hat_eval(s).abs())
            .reduce(f64::min);
        checks.push(ValidationCheck::from_margin("K3:support", support, outside.len()));

        let (lower, upper) = k.trihat_bounds();
        let inside: Vec<f64> = grid.iter().cloned().filter(|s| *s > 0.0 && *s < 1.0).collect();
        let sandwich = inside
            .iter()
            .map(|&s| {
                let ratio = crate::spectral::script_t(k, s) / s.powi(d as i32);
                (ratio - lower).min(upper - ratio)
            })
            .reduce(f64::min);
        checks.push(ValidationCheck::from_margin("K3:sandwich", sandwich, inside.len()));
    }

    let scan_min_spacing = grid.windows(2).map(|w| w[1] - w[0]).reduce(f64::min);
    Ok(ValidationReport {
        subject: k.id().to_string(),
        checks,
        scan_points: grid.len(),
        scan_min_spacing,
    })
}

/// Tolerance for the vanishing-derivative scan of (A2).
pub const DERIVATIVE_TOL: f64 = 1e-6;

/// Check (A1)–(A2) numerically: unit mass by radial quadrature, `ρ̂(0) = 1`,
/// a local maximum of `|ρ̂|` at the origin on a small ball, and finite
/// difference estimates of every `∂^j ρ̂(0)` with `0 < |j| ≤ d − 1`.
pub fn validate_mollifier(m: &Mollifier) -> ValidationReport {
    let d = m.dimension();
    let mut checks = Vec::new();

    let area = sphere_area(d);
    let mass = area
        * integrate_panels(0.0, m.support_radius(), 64, 32, |r| {
            m.profile_eval(r) * r.powi(d as i32 - 1)
        });
    checks.push(ValidationCheck::from_margin("A1:unit_mass", Some(1e-8 - (mass - 1.0).abs()), 1));
    checks.push(ValidationCheck::from_margin(
        "A1:hat_at_origin",
        Some(1e-12 - (m.hat_radial(0.0) - 1.0).abs()),
        1,
    ));

    let radii: Vec<f64> = (1..=200).map(|i| 0.25 * i as f64 / 200.0).collect();
    let local_max = radii
        .iter()
        .map(|&s| 1.0 - m.hat_radial(s).abs())
        .reduce(f64::min);
    checks.push(ValidationCheck::from_margin("A2:local_maximum", local_max, radii.len()));

    let derivs = finite_difference_derivatives(m, d.saturating_sub(1));
    let worst = derivs.iter().map(|(_, v)| v.abs()).reduce(f64::max);
    checks.push(ValidationCheck::from_margin(
        "A2:vanishing_derivatives",
        worst.map(|w| DERIVATIVE_TOL - w),
        derivs.len(),
    ));

    ValidationReport {
        subject: m.id().to_string(),
        checks,
        scan_points: radii.len(),
        scan_min_spacing: Some(0.25 / 200.0),
    }
}

/// Central finite-difference estimates of `∂^j ρ̂(0)` for every multi-index
/// with `1 ≤ |j| ≤ max_order`.
pub fn finite_difference_derivatives(m: &Mollifier, max_order: usize) -> Vec<(Vec<usize>, f64)> {
    let d = m.dimension();
    let mut out = Vec::new();
    for j in multi_indices(d, max_order) {
        let order: usize = j.iter().sum();
        if order == 0 {
            continue;
        }
        let h = 1e-3 * (order as f64);
        out.push((j.clone(), mixed_partial(&|w: &[f64]| m.hat_eval(w), &j, h)));
    }
    out
}

/// Tensor-product central difference for `∂^j f(0)`.
pub fn mixed_partial(f: &dyn Fn(&[f64]) -> f64, j: &[usize], h: f64) -> f64 {
    let d = j.len();
    let stencils: Vec<Vec<(f64, f64)>> = j
        .iter()
        .map(|&k| {
            (0..=k)
                .map(|i| {
                    let coef = binomial(k, i) * if i % 2 == 0 { 1.0 } else { -1.0 };
                    (coef / h.powi(k as i32), (k as f64 / 2.0 - i as f64) * h)
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let mut point = vec![0.0; d];
    loop {
        let mut weight = 1.0;
        for a in 0..d {
            let (c, x) = stencils[a][idx[a]];
            weight *= c;
            point[a] = x;
        }
        total += weight * f(&point);
        let mut a = 0;
        loop {
            if a == d {
                return total;
            }
            idx[a] += 1;
            if idx[a] < stencils[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn multi_indices(d: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for prefix in &out {
            let used: usize = prefix.iter().sum();
            for k in 0..=(max_order - used.min(max_order)) {
                let mut v = prefix.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_kernel_examples() {
        let k = SeedKernel::ball(1).unwrap();
        assert_eq!(k.radial_eval(0.0), 1.0);
        assert!(k.radial_eval(PI).abs() < 1e-15);
        assert_eq!(k.radial_hat_eval(2.0), 0.0);
        assert!((k.radial_hat_eval(0.5) - 0.5).abs() < 1e-15);
        assert!(SeedKernel::ball(0).is_err());
    }

    #[test]
    fn ball_kernel_spectrum_has_unit_mass() {
        // ∫ K̂ over ℝ^d reproduces K(0) = 1
        for d in 1..=4 {
            let k = SeedKernel::ball(d).unwrap();
            let area = sphere_area(d);
            let mass = area
                * integrate_panels(0.0, 1.0, 16, 16, |s| k.radial_hat_eval(s) * s.powi(d as i32 - 1));
            assert!((mass - 1.0).abs() < 1e-6, "d={d} mass={mass}");
            assert!((k.radial_eval(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_weights_cancel() {
        let s = [1.0, 0.5, 0.25];
        let c = moment_cancelling_weights(&s);
        for j in 0..3 {
            let m: f64 = c.iter().zip(&s).map(|(c, s)| c * s.powi(2 * j)).sum();
            let target = if j == 0 { 1.0 } else { 0.0 };
            assert!((m - target).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_mollifier_examples() {
        let m = standard_mollifier(2, 1).unwrap();
        assert!((m.hat_eval(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
        let gx = mixed_partial(&|w: &[f64]| m.hat_eval(w), &[1, 0], 1e-3);
        let gy = mixed_partial(&|w: &[f64]| m.hat_eval(w), &[0, 1], 1e-3);
        assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
        let sq = |w: &[f64]| m.hat_eval(w).powi(2);
        let trace = mixed_partial(&sq, &[2, 0], 1e-3) + mixed_partial(&sq, &[0, 2], 1e-3);
        assert!(trace < 0.0, "trace={trace}");
        assert!(standard_mollifier(3, 1).is_err());
        assert!(standard_mollifier(2, 0).is_err());
    }

    #[test]
    fn mollifier_hat_matches_direct_transform() {
        // d = 1: ρ̂(s) = ∫ ρ(x) cos(sx) dx directly
        let m = standard_mollifier(1, 1).unwrap();
        for s in [0.3, 2.0, 11.0] {
            let direct = integrate_panels(-1.0, 1.0, 64, 32, |x| m.profile_eval(x) * (s * x).cos());
            assert!((m.hat_radial(s) - direct).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn one_minus_hat_is_consistent() {
        let m = standard_mollifier(2, 1).unwrap();
        for s in [1e-3, 0.4, 3.0] {
            assert!((m.one_minus_hat(s) - (1.0 - m.hat_radial(s))).abs() < 1e-14);
        }
        // quadratic behaviour near zero survives to tiny arguments
        let r = m.one_minus_hat(1e-7) / m.one_minus_hat(1e-6);
        assert!((r - 1e-2).abs() < 1e-8);
    }

    #[test]
    fn validation_of_standard_mollifiers() {
        for (d, order) in [(1, 1), (2, 1), (3, 2), (4, 2)] {
            let m = standard_mollifier(d, order).unwrap();
            let report = validate_mollifier(&m);
            assert!(report.passed(), "d={d} order={order}: {report:?}");
            for (j, v) in finite_difference_derivatives(&m, d - 1) {
                assert!(v.abs() < DERIVATIVE_TOL, "∂^{j:?} = {v}");
            }
        }
    }

    #[test]
    fn validate_ball_d1() {
        let k = SeedKernel::ball(1).unwrap();
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let r = validate_seed(&k, &grid).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.check("K3:sandwich").unwrap().margin.unwrap() > 0.0);
    }

    #[test]
    fn validate_detects_k1_violation() {
        let k = SeedKernel::custom(CustomKernel {
            dimension: 1,
            id: "scaled".into(),
            radial: Arc::new(|r: f64| 0.9 * if r == 0.0 { 1.0 } else { r.sin() / r }),
            hat: Arc::new(|s: f64| if s <= 1.0 { 0.45 } else { 0.0 }),
            hat_support_radius: 1.0,
            decay: (2.0, 1.0),
            trihat: (0.5, 1.5),
            k3_compliant: true,
        });
        let r = validate_seed(&k, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        let k1 = r.check("K1:unit_variance").unwrap();
        assert!(!k1.passed);
        assert!((k1.violation() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn validate_degenerate_grid() {
        let k = SeedKernel::ball(2).unwrap();
        let r = validate_seed(&k, &[0.0]).unwrap();
        assert!(r.is_degenerate());
        assert!(r.check("K1:unit_variance").unwrap().passed);
        assert!(validate_seed(&k, &[]).is_err());
        assert!(validate_seed(&k, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn truncation_basics() {
        let k = SeedKernel::ball(1).unwrap();
        let kd = truncate_kernel(&k, 0.1).unwrap();
        assert!((kd.radial_eval(0.0) - 1.0).abs() < 1e-9);
        assert_eq!(kd.radial_eval(10.5), 0.0);
        assert!(!kd.k3_compliant());
        assert!(truncate_kernel(&k, 0.0).is_err());
        assert!(truncate_kernel(&k, -1.0).is_err());
    }

    #[test]
    fn cutoff_unit_at_origin_in_several_dimensions() {
        for d in 1..=3 {
            let c = cutoff_profile(d);
            assert!((c.eval(0.0) - 1.0).abs() < 1e-9, "d={d} χ(0)={}", c.eval(0.0));
            assert_eq!(c.eval(1.0), 0.0);
        }
    }

    #[test]
    fn table_round_trip_through_text() {
        let mut text = String::from("radius,hat\n");
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            text.push_str(&format!("{s},{}\n", 0.5));
        }
        let k = SeedKernel::from_table_text(&text, 1, "mem").unwrap();
        assert!(k.k3_compliant());
        assert!((k.radial_eval(0.0) - 1.0).abs() < 1e-10);
        assert!((k.radial_eval(2.0) - 2f64.sin() / 2.0).abs() < 1e-10);
        assert!(SeedKernel::from_table_text("radius,bogus\n0,1\n1,1\n2,1\n3,1\n", 1, "x").is_err());
    }
}
