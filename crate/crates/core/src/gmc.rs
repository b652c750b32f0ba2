//! Approximate chaos measures built from sampled fields: the exponential
//! (sub- and supercritical) normalisation, the derivative normalisation at
//! criticality, and the diagonal tilt.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{FieldKind, GridField, GridSpec};

/// Default cap on natural-log weights.
pub const DEFAULT_LOG_CAP: f64 = 700.0;

/// `γ_c = √(2d)`.
pub fn critical_gamma(d: usize) -> f64 {
    (2.0 * d as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sub,
    CriticalDerivative,
    SuperEps,
    SuperT,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Eps(f64),
    T(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub gamma: f64,
    pub regime: Regime,
    pub norm: f64,
    pub variance: f64,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub field_kind: FieldKind,
    pub rng_seed: u64,
    pub log_cap: f64,
    /// Number of cells whose log-weight hit the cap.
    pub overflow_count: usize,
    /// Fraction of cells with a negative derivative weight set to zero.
    pub truncated_fraction: Option<f64>,
    /// Exponent applied by a diagonal tilt, if any.
    pub tilt_exponent: Option<f64>,
}

/// Weights on grid cells, already multiplied by the cell volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeasure {
    pub grid: GridSpec,
    pub weights: Vec<f64>,
    pub meta: MeasureMeta,
}

impl GridMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn overflowed(&self) -> bool {
        self.meta.overflow_count > 0
    }

    /// Mass of the cells whose grid points lie in the box `[lo, hi)`.
    pub fn mass_in_box(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let d = self.grid.dimension;
        assert!(lo.len() == d && hi.len() == d);
        let n = self.grid.points_per_side;
        let h = self.grid.spacing();
        // per-axis index ranges
        let ranges: Vec<(usize, usize)> = (0..d)
            .map(|a| {
                let o = self.grid.origin[a];
                let first = ((lo[a] - o) / h).ceil().max(0.0) as usize;
                let end = (((hi[a] - o) / h).ceil().max(0.0) as usize).min(n);
                (first.min(end), end)
            })
            .collect();
        if ranges.iter().any(|(a, b)| a >= b) {
            return 0.0;
        }
        let mut total = 0.0;
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let flat = idx.iter().fold(0, |acc, i| acc * n + i);
            total += self.weights[flat];
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < ranges[a].1 {
                    continue 'outer;
                }
                idx[a] = ranges[a].0;
            }
            break;
        }
        total
    }

    /// Share of the total mass carried by the `k` heaviest cells.
    pub fn top_fraction(&self, k: usize) -> f64 {
        let total = self.total_mass();
        if total <= 0.0 {
            return 0.0;
        }
        let mut w = self.weights.clone();
        let k = k.min(w.len());
        if k == 0 {
            return 0.0;
        }
        w.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        w[..k].iter().sum::<f64>() / total
    }
}

/// Supercritical prefactor: `|log ε|^{3γ/(2√(2d))} ε^{-(γ/√2 - √d)²}` in
/// `Eps` mode, `t^{3γ/(2√(2d))} e^{t(γ/√2 - √d)²}` in `T` mode.
pub fn supercritical_norm(d: usize, gamma: f64, mode: NormMode) -> Result<f64> {
    Ok(log_supercritical_norm(d, gamma, mode)?.exp())
}

pub fn log_supercritical_norm(d: usize, gamma: f64, mode: NormMode) -> Result<f64> {
    let gc = critical_gamma(d);
    if !(gamma > gc) {
        return Err(invalid("gamma", format!("must exceed √(2d) = {gc}, got {gamma}")));
    }
    let power = 3.0 * gamma / (2.0 * gc);
    let rate = (gamma / 2f64.sqrt() - (d as f64).sqrt()).powi(2);
    match mode {
        NormMode::Eps(eps) => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(invalid("eps", format!("must lie in (0, 1), got {eps}")));
            }
            let l = -eps.ln();
            Ok(power * l.ln() + rate * l)
        }
        NormMode::T(t) => {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid("t", format!("must be positive, got {t}")));
            }
            Ok(power * t.ln() + rate * t)
        }
    }
}

fn cap_logs(logs: impl Iterator<Item = f64>, cap: f64) -> (Vec<f64>, usize) {
    let mut overflow = 0;
    let weights = logs
        .map(|l| {
            if l > cap {
                overflow += 1;
                cap.exp()
            } else {
                l.exp()
            }
        })
        .collect();
    (weights, overflow)
}

/// Regime label for an exponential measure at `gamma` in dimension `d`.
pub fn exponential_regime(d: usize, gamma: f64, mode: Option<NormMode>) -> Regime {
    if gamma <= critical_gamma(d) {
        Regime::Sub
    } else {
        match mode {
            Some(NormMode::Eps(_)) => Regime::SuperEps,
            _ => Regime::SuperT,
        }
    }
}

/// `norm · exp(γ X(x) − γ² σ² / 2) · cell volume`, evaluated in log space.
///
/// All sampled kinds are stationary, so the pointwise variance `σ²` is a
/// single number; passing the field's lattice variance makes every weight
/// mean-`norm·cellvolume` exactly.
pub fn chaos_measure(
    field: &GridField,
    gamma: f64,
    variance: f64,
    norm: f64,
    log_cap: f64,
) -> Result<GridMeasure> {
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid("norm", "must be positive and finite"));
    }
    if !(variance >= 0.0) {
        return Err(invalid("variance", "must be nonnegative"));
    }
    let shift = norm.ln() - 0.5 * gamma * gamma * variance + field.grid.cell_volume().ln();
    let (weights, overflow_count) =
        cap_logs(field.values.iter().map(|x| gamma * x + shift), log_cap);
    let mode = match (field.meta.eps, field.meta.t) {
        (Some(e), _) => Some(NormMode::Eps(e)),
        (None, Some(t)) => Some(NormMode::T(t)),
        _ => None,
    };
    Ok(GridMeasure {
        grid: field.grid.clone(),
        weights,
        meta: MeasureMeta {
            gamma,
            regime: exponential_regime(field.grid.dimension, gamma, mode),
            norm,
            variance,
            t: field.meta.t,
            eps: field.meta.eps,
            field_kind: field.meta.kind,
            rng_seed: field.meta.rng_seed,
            log_cap,
            overflow_count,
            truncated_fraction: None,
            tilt_exponent: None,
        },
    })
}

/// `(√(2d) t − X) exp(√(2d) X − d t) · cell volume`, negative weights set to
/// zero. Uses `t` as the pointwise variance.
pub fn derivative_measure(field: &GridField, t: f64, log_cap: f64) -> Result<GridMeasure> {
    if field.meta.kind != FieldKind::MartingaleT {
        return Err(Error::Precondition(
            "derivative normalisation needs a martingale field".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(invalid("t", "must be nonnegative"));
    }
    let d = field.grid.dimension;
    let gc = critical_gamma(d);
    let cell = field.grid.cell_volume().ln();
    let mut truncated = 0usize;
    let mut overflow_count = 0usize;
    let weights = field
        .values
        .iter()
        .map(|&x| {
            let lead = gc * t - x;
            if lead <= 0.0 {
                truncated += 1;
                return 0.0;
            }
            let l = lead.ln() + gc * x - d as f64 * t + cell;
            if l > log_cap {
                overflow_count += 1;
                log_cap.exp()
            } else {
                l.exp()
            }
        })
        .collect();
    Ok(GridMeasure {
        grid: field.grid.clone(),
        weights,
        meta: MeasureMeta {
            gamma: gc,
            regime: Regime::CriticalDerivative,
            norm: 1.0,
            variance: t,
            t: Some(t),
            eps: None,
            field_kind: field.meta.kind,
            rng_seed: field.meta.rng_seed,
            log_cap,
            overflow_count,
            truncated_fraction: Some(truncated as f64 / field.values.len() as f64),
            tilt_exponent: None,
        },
    })
}

/// Multiply a critical measure by `exp((d − √(d/2) γ) g(x, x))`.
pub fn apply_diagonal_tilt(
    measure: &GridMeasure,
    gamma: f64,
    g_diag: &dyn Fn(&[f64]) -> f64,
) -> Result<GridMeasure> {
    if measure.meta.regime != Regime::CriticalDerivative {
        return Err(Error::Precondition("tilt applies to critical measures".into()));
    }
    let d = measure.grid.dimension as f64;
    let c = d - (d / 2.0).sqrt() * gamma;
    let mut out = measure.clone();
    if c != 0.0 {
        for (i, w) in out.weights.iter_mut().enumerate() {
            *w *= (c * g_diag(&measure.grid.point(i))).exp();
        }
    }
    out.meta.tilt_exponent = Some(c);
    Ok(out)
}
