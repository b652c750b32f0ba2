//! Monte Carlo harness: ensemble summaries, Laplace functionals, scaling
//! fits, Hill tail indices, the Kahane convexity check, and truncated-kernel
//! covariance comparisons.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{cutoff_profile, SeedKernel};
use crate::quad::gauss_legendre;
use crate::rng::StreamKey;

/// Evaluate `f(i, key.child(i))` for `i < n` in parallel; output order (and
/// hence any later reduction) does not depend on scheduling.
pub fn replica_map<T, F>(n: usize, key: StreamKey, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, StreamKey) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(i, key.child(i as u64)))
        .collect()
}

/// Fallible variant of [`replica_map`]; the first error in index order wins.
pub fn try_replica_map<T, F>(n: usize, key: StreamKey, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, StreamKey) -> Result<T> + Sync,
{
    replica_map(n, key, f).into_iter().collect()
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `√n`.
    pub se: f64,
    /// Values at [`SUMMARY_QUANTILES`].
    pub quantiles: Vec<f64>,
    pub overflow_count: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    let frac = pos - i as f64;
    sorted[i] + frac * (sorted[j] - sorted[i])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

impl EnsembleSummary {
    pub fn from_values(values: Vec<f64>, overflow_count: usize) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Degenerate("empty ensemble".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Degenerate("ensemble contains NaN".into()));
        }
        let constant = values.iter().all(|v| *v == values[0]);
        let mean = if constant {
            values[0]
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let se = if n > 1 && !constant {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let quantiles = SUMMARY_QUANTILES
            .iter()
            .map(|&p| quantile_sorted(&sorted, p))
            .collect();
        Ok(Self {
            n,
            mean,
            se,
            quantiles,
            overflow_count,
            values,
        })
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }

    /// `|mean − target| ≤ k·SE + bias`.
    pub fn within(&self, target: f64, k: f64, bias: f64) -> bool {
        (self.mean - target).abs() <= k * self.se + bias
    }
}

/// Sample skewness and excess kurtosis.
pub fn skewness_kurtosis(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Summary of `exp(−pairing)` where `sampler` returns one realisation of
/// `μ(φ)` per stream.
pub fn mc_laplace<F>(sampler: F, replicas: usize, key: StreamKey) -> Result<EnsembleSummary>
where
    F: Fn(StreamKey) -> Result<f64> + Sync,
{
    if replicas < 100 {
        return Err(invalid("replicas", format!("need at least 100, got {replicas}")));
    }
    let values = try_replica_map(replicas, key, |_, k| sampler(k).map(|v| (-v).exp()))?;
    EnsembleSummary::from_values(values, 0)
}

// ---------------------------------------------------------------------------
// Scaling fits

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub q: f64,
    pub scales: Vec<f64>,
    pub moments: Vec<f64>,
    pub moment_se: Vec<f64>,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub target: f64,
    /// Standardised residuals of `log E[M^q]` about the fit.
    pub residuals: Vec<f64>,
}

impl ScalingFit {
    pub fn matches_target(&self, k: f64) -> bool {
        (self.slope - self.target).abs() <= k * self.slope_se
    }
}

/// Weighted least squares of `y` on `x`; weights `None` means ordinary LS
/// with the residual-variance slope error.
fn linear_fit(x: &[f64], y: &[f64], w: Option<&[f64]>) -> (f64, f64, f64) {
    let n = x.len();
    let ones = vec![1.0; n];
    let weighted = w.is_some();
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - xm).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((a, c), b)| b * (a - xm) * (c - ym))
        .sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let se = if !weighted {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, c)| (c - intercept - slope * a).powi(2))
            .sum();
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        (1.0 / sxx).sqrt()
    };
    (slope, se, intercept)
}

/// Regress `log E[M(r)^q]` on `log r`, where `sampler(r, key)` draws the mass
/// of the region at scale `r`.
pub fn multifractal_fit<F>(
    sampler: F,
    q: f64,
    scales: &[f64],
    replicas: usize,
    key: StreamKey,
    target: f64,
) -> Result<ScalingFit>
where
    F: Fn(f64, StreamKey) -> Result<f64> + Sync,
{
    if scales.len() < 4 {
        return Err(invalid("scales", "need at least 4 scales"));
    }
    if scales.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("scales", "must be positive"));
    }
    let lo = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 4.0 {
        return Err(invalid("scales", "must span at least two octaves"));
    }
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    let mut moments = Vec::new();
    let mut moment_se = Vec::new();
    for (j, &r) in scales.iter().enumerate() {
        let k = key.child(j as u64);
        let values = try_replica_map(replicas, k, |_, kk| sampler(r, kk).map(|m| m.powf(q)))?;
        let s = EnsembleSummary::from_values(values, 0)?;
        moments.push(s.mean);
        moment_se.push(s.se);
    }
    let x: Vec<f64> = scales.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let se_y: Vec<f64> = moment_se.iter().zip(&moments).map(|(s, m)| s / m).collect();
    let weighted = se_y.iter().all(|s| *s > 0.0);
    let weights: Vec<f64> = se_y.iter().map(|s| 1.0 / (s * s)).collect();
    let (slope, slope_se, intercept) = if weighted {
        linear_fit(&x, &y, Some(&weights))
    } else {
        linear_fit(&x, &y, None)
    };
    let residuals = x
        .iter()
        .zip(&y)
        .zip(&se_y)
        .map(|((a, b), s)| {
            let r = b - intercept - slope * a;
            if *s > 0.0 {
                r / s
            } else {
                r
            }
        })
        .collect();
    Ok(ScalingFit {
        q,
        scales: scales.to_vec(),
        moments,
        moment_se,
        slope,
        slope_se,
        intercept,
        target,
        residuals,
    })
}

/// `ξ(q) = √(2d) γ q − γ² q² / 2`.
pub fn xi(d: usize, gamma: f64, q: f64) -> f64 {
    (2.0 * d as f64).sqrt() * gamma * q - gamma * gamma * q * q / 2.0
}

// ---------------------------------------------------------------------------
// Tail index

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HillEstimate {
    pub index: f64,
    pub se: f64,
    pub k: usize,
    pub threshold: f64,
}

/// Hill estimator over the top `top_fraction` order statistics.
pub fn hill_index(samples: &[f64], top_fraction: f64) -> Result<HillEstimate> {
    if samples.len() < 1000 {
        return Err(invalid("samples", format!("need at least 1000, got {}", samples.len())));
    }
    if !(top_fraction > 0.0 && top_fraction <= 0.05) {
        return Err(invalid("top_fraction", "must lie in (0, 0.05]"));
    }
    if samples.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(invalid("samples", "must be positive and finite"));
    }
    let k = ((samples.len() as f64 * top_fraction).floor() as usize).max(2);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let h = sorted[..k].iter().map(|v| (v / threshold).ln()).sum::<f64>() / k as f64;
    if !(h > 0.0) {
        return Err(Error::Degenerate("top order statistics are constant".into()));
    }
    let index = 1.0 / h;
    Ok(HillEstimate {
        index,
        se: index / (k as f64).sqrt(),
        k,
        threshold,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailRow {
    pub t: f64,
    pub hill: HillEstimate,
    pub median_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailStudy {
    pub rows: Vec<TailRow>,
    pub target: f64,
    /// Distance to the target at the last `t` is no larger than at the first.
    pub trending: bool,
    /// `α` close to 1: the estimator's spread is large.
    pub wide_band: bool,
}

/// Hill index of total masses per `t`, compared with `α = √(2d)/γ`.
pub fn supercritical_tail_study(
    ensembles: &[(f64, Vec<f64>)],
    d: usize,
    gamma: f64,
    top_fraction: f64,
) -> Result<TailStudy> {
    let target = crate::atomic::alpha(d, gamma)?;
    let rows = ensembles
        .iter()
        .map(|(t, masses)| {
            Ok(TailRow {
                t: *t,
                hill: hill_index(masses, top_fraction)?,
                median_mass: median(masses),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let trending = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (b.hill.index - target).abs() <= (a.hill.index - target).abs(),
        _ => false,
    };
    Ok(TailStudy {
        rows,
        target,
        trending,
        wide_band: target > 0.9,
    })
}

// ---------------------------------------------------------------------------
// Kahane convexity

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KahaneResult {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// Standard error of the paired difference `lhs − rhs`.
    pub diff_se: f64,
    pub violated: bool,
}

fn gaussian_factor(cov: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    if cov.nrows() != cov.ncols() || cov.nrows() == 0 {
        return Err(invalid("covariance", format!("{name} must be square and nonempty")));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > 1e-12 * cov.abs().max().max(1.0) {
        return Err(Error::Precondition(format!("{name} is not symmetric")));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let scale = eig.eigenvalues.abs().max().max(1.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::Precondition(format!(
            "{name} is not positive semidefinite (eigenvalue {min})"
        )));
    }
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * roots)
}

/// Monte Carlo comparison of `E φ(Σ f_i e^{X_i − Var X_i/2})` for the two
/// covariances, with common random numbers and a paired-difference error.
pub fn kahane_check(
    cov_x: &DMatrix<f64>,
    cov_y: &DMatrix<f64>,
    f: &[f64],
    convex: &(dyn Fn(f64) -> f64 + Sync),
    replicas: usize,
    key: StreamKey,
) -> Result<KahaneResult> {
    let n = cov_x.nrows();
    if cov_y.shape() != cov_x.shape() || f.len() != n {
        return Err(invalid("kahane", "shapes of covariances and weights differ"));
    }
    if f.iter().any(|w| *w < 0.0) {
        return Err(invalid("f", "weights must be nonnegative"));
    }
    for i in 0..n {
        for j in 0..n {
            if cov_x[(i, j)] > cov_y[(i, j)] + 1e-14 {
                return Err(Error::Precondition(format!(
                    "entrywise dominance fails at ({i}, {j}): {} > {}",
                    cov_x[(i, j)],
                    cov_y[(i, j)]
                )));
            }
        }
    }
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    let lx = gaussian_factor(cov_x, "cov_X")?;
    let ly = gaussian_factor(cov_y, "cov_Y")?;
    let pairs = replica_map(replicas, key, |_, k| {
        let mut rng = k.rng();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let side = |l: &DMatrix<f64>, cov: &DMatrix<f64>| {
            let g = l * &z;
            let integral: f64 = (0..n)
                .map(|i| f[i] * (g[i] - 0.5 * cov[(i, i)]).exp())
                .sum();
            convex(integral)
        };
        (side(&lx, cov_x), side(&ly, cov_y))
    });
    let lhs = EnsembleSummary::from_values(pairs.iter().map(|p| p.0).collect(), 0)?;
    let rhs = EnsembleSummary::from_values(pairs.iter().map(|p| p.1).collect(), 0)?;
    let diff = EnsembleSummary::from_values(pairs.iter().map(|p| p.0 - p.1).collect(), 0)?;
    Ok(KahaneResult {
        lhs: lhs.mean,
        lhs_se: lhs.se,
        rhs: rhs.mean,
        rhs_se: rhs.se,
        diff_se: diff.se,
        violated: diff.mean > 3.0 * diff.se,
    })
}

/// Convex test functions used by the battery.
pub const KAHANE_CONVEX: [&str; 4] = ["exp(-x)", "x^2", "max(x-1,0)", "-ln(x)"];

pub fn kahane_convex(name: &str) -> Option<fn(f64) -> f64> {
    match name {
        "exp(-x)" => Some(|x: f64| (-x).exp()),
        "x^2" => Some(|x: f64| x * x),
        "max(x-1,0)" => Some(|x: f64| (x - 1.0).max(0.0)),
        "-ln(x)" => Some(|x: f64| -x.ln()),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KahaneCase {
    pub size: usize,
    pub convex: String,
    pub result: KahaneResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KahaneBattery {
    pub cases: Vec<KahaneCase>,
    pub violations: usize,
}

/// Random pair `cov_X ≤ cov_Y` entrywise, both PSD: `cov_Y = cov_X + C Cᵀ`
/// with `C ≥ 0` entrywise.
pub fn random_dominated_pair(size: usize, key: StreamKey) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = key.rng();
    let a = DMatrix::from_fn(size, size, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        0.8 * g
    });
    let c = DMatrix::from_fn(size, size, |_, _| 0.6 * rng.random::<f64>());
    let cov_x = &a * a.transpose() / size as f64;
    let cov_y = &cov_x + &c * c.transpose() / size as f64;
    (cov_x, cov_y)
}

/// `pairs` random dominated pairs of size `1..=8`, cycling through the convex
/// test functions.
pub fn kahane_battery(pairs: usize, replicas: usize, key: StreamKey) -> Result<KahaneBattery> {
    let mut cases = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let k = key.child(p as u64);
        let mut rng = k.tagged("shape").rng();
        let size = rng.random_range(1..=8usize);
        let f: Vec<f64> = (0..size).map(|_| rng.random_range(0.1..1.0) / size as f64).collect();
        let (cx, cy) = random_dominated_pair(size, k.tagged("cov"));
        let name = KAHANE_CONVEX[p % KAHANE_CONVEX.len()];
        let convex = kahane_convex(name).expect("known name");
        let result = kahane_check(&cx, &cy, &f, &convex, replicas, k.tagged("mc"))?;
        cases.push(KahaneCase {
            size,
            convex: name.to_string(),
            result,
        });
    }
    let violations = cases.iter().filter(|c| c.result.violated).count();
    Ok(KahaneBattery { cases, violations })
}

// ---------------------------------------------------------------------------
// Truncated-kernel covariance comparison

/// `∫_s^t [K − K_δ](e^r x) dr = ∫_{e^s|x|}^{e^t|x|} K(y)(1 − χ(δy)) dy / y`.
pub fn truncation_discrepancy(k: &SeedKernel, delta: f64, x: f64, s: f64, t: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 || s == t {
        return 0.0;
    }
    let (s, t, sign) = if s < t { (s, t, 1.0) } else { (t, s, -1.0) };
    let cutoff = cutoff_profile(k.dimension());
    let a = s.exp() * x;
    let b = t.exp() * x;
    let mut edges = vec![a];
    // geometric panels below 1, unit panels above, a break at the cutoff edge
    let mut y = a;
    while y < 1.0f64.min(b) {
        y = (y * 1.5).min(1.0f64.min(b));
        edges.push(y);
    }
    while y < b {
        y = (y + 1.0).min(b);
        edges.push(y);
    }
    let edge = 1.0 / delta;
    if edge > a && edge < b {
        edges.push(edge);
        edges.sort_by(|p, q| p.total_cmp(q));
    }
    let rule = gauss_legendre(16);
    let total: f64 = edges
        .windows(2)
        .map(|w| {
            rule.integrate(w[0], w[1], |y| {
                k.radial_eval(y) * (1.0 - cutoff.eval(delta * y)) / y
            })
        })
        .sum();
    sign * total
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub delta: f64,
    pub sup_discrepancy: f64,
    pub worst_lag: f64,
    pub worst_pair: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceComparison {
    pub kernel_id: String,
    pub eps_target: f64,
    pub lags: Vec<f64>,
    pub pairs: Vec<(f64, f64)>,
    pub rows: Vec<ComparisonRow>,
    /// Sup discrepancy is nonincreasing along the δ-list.
    pub monotone: bool,
    /// Largest δ on the list meeting the target, if any.
    pub smallest_delta: Option<f64>,
}

pub fn covariance_comparison(
    k: &SeedKernel,
    deltas: &[f64],
    eps_target: f64,
    lags: &[f64],
    pairs: &[(f64, f64)],
) -> Result<CovarianceComparison> {
    if deltas.is_empty() || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("deltas", "must be nonempty and strictly decreasing"));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(invalid("deltas", "must be positive"));
    }
    let jobs: Vec<(f64, f64, f64)> = lags
        .iter()
        .flat_map(|&x| pairs.iter().map(move |&(s, t)| (x, s, t)))
        .collect();
    let rows: Vec<ComparisonRow> = deltas
        .iter()
        .map(|&delta| {
            let values: Vec<f64> = jobs
                .par_iter()
                .map(|&(x, s, t)| truncation_discrepancy(k, delta, x, s, t).abs())
                .collect();
            let (i, sup) = values
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
            let (x, s, t) = jobs.get(i).copied().unwrap_or((0.0, 0.0, 0.0));
            ComparisonRow {
                delta,
                sup_discrepancy: sup,
                worst_lag: x,
                worst_pair: (s, t),
            }
        })
        .collect();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].sup_discrepancy <= w[0].sup_discrepancy);
    let smallest_delta = rows
        .iter()
        .find(|r| r.sup_discrepancy < eps_target)
        .map(|r| r.delta);
    Ok(CovarianceComparison {
        kernel_id: k.id().to_string(),
        eps_target,
        lags: lags.to_vec(),
        pairs: pairs.to_vec(),
        rows,
        monotone,
        smallest_delta,
    })
}
