//! Spectral synthesis of stationary Gaussian fields on periodic grids, the
//! layered martingale approximation, and the decomposed convolution
//! approximation `X*_{t_ε} + W_{t_ε} + Z_{t_ε}`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{Mollifier, SeedKernel};
use crate::rng::StreamKey;
use crate::spectral::{
    spectrum_increment, spectrum_w_t, spectrum_z_t, DecompositionCertificate, SpectralDensity,
};

/// Periodic grid `[origin, origin + L)^d` with `N` points per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: usize,
    pub points_per_side: usize,
    pub side_length: f64,
    pub origin: Vec<f64>,
}

impl GridSpec {
    pub fn new(dimension: usize, points_per_side: usize, side_length: f64) -> Result<Self> {
        let spec = Self {
            dimension,
            points_per_side,
            side_length,
            origin: vec![0.0; dimension],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid("grid.dimension", "must be at least 1"));
        }
        if self.points_per_side < 8 || !self.points_per_side.is_power_of_two() {
            return Err(invalid(
                "grid.points_per_side",
                format!("must be a power of two ≥ 8, got {}", self.points_per_side),
            ));
        }
        if !(self.side_length > 0.0 && self.side_length.is_finite()) {
            return Err(invalid("grid.side_length", "must be positive"));
        }
        if self.origin.len() != self.dimension {
            return Err(invalid("grid.origin", "length must equal the dimension"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points_per_side.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.side_length / self.points_per_side as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    /// Lattice frequency step `2π / L`.
    pub fn frequency_step(&self) -> f64 {
        2.0 * PI / self.side_length
    }

    /// Multi-index of a flat (row-major) index.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let n = self.points_per_side;
        let mut idx = vec![0; self.dimension];
        for a in (0..self.dimension).rev() {
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Physical coordinates of grid point `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let h = self.spacing();
        self.unravel(flat)
            .into_iter()
            .zip(&self.origin)
            .map(|(i, o)| o + h * i as f64)
            .collect()
    }

    /// Signed frequency index of FFT bin `i`.
    fn signed(&self, i: usize) -> i64 {
        let n = self.points_per_side as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Stationary,
    MartingaleT,
    ConvEps,
    WT,
    ZT,
    Sum,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub kind: FieldKind,
    pub t: Option<f64>,
    pub eps: Option<f64>,
    pub a_const: Option<f64>,
    pub kernel_id: Option<String>,
    pub mollifier_id: Option<String>,
    pub density_label: String,
    pub rng_seed: u64,
    pub layer_count: usize,
    /// Pointwise variance of the lattice field, `Σ_k f̂(k) Δk^d`.
    pub lattice_variance: f64,
}

/// One realisation of a Gaussian field on a periodic grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl GridField {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spatial average of `self(x) · other(x + lag·h e₁)` with periodic wrap.
    pub fn lagged_product(&self, other: &GridField, lag: usize) -> f64 {
        assert_eq!(self.grid, other.grid);
        let n = self.grid.points_per_side;
        let stride = n.pow(self.grid.dimension as u32 - 1);
        let total = self.values.len();
        let mut acc = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            let i0 = flat / stride;
            let shifted = ((i0 + lag) % n) * stride + flat % stride;
            acc += v * other.values[shifted];
        }
        acc / total as f64
    }

    fn add_assign(&mut self, other: &GridField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

// ---------------------------------------------------------------------------
// FFT helpers

fn inverse_fft_nd(data: &mut [Complex64], n: usize, d: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(n);
    if d == 1 {
        fft.process(data);
        return;
    }
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_mut(n) {
                fft.process(chunk);
            }
            continue;
        }
        let block = stride * n;
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                for (i, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + offset + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + offset + i * stride] = *v;
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Stationary synthesis

/// Mode amplitudes `√(f̂(k) Δk^d)` of a density on a grid's frequency lattice.
/// Building this is the expensive step; sampling reuses it.
#[derive(Debug, Clone)]
pub struct LatticeSpectrum {
    grid: GridSpec,
    amplitudes: Arc<Vec<f64>>,
    label: String,
    variance: f64,
}

impl LatticeSpectrum {
    pub fn new(grid: &GridSpec, density: &SpectralDensity) -> Result<Self> {
        grid.validate()?;
        if density.dimension() != grid.dimension {
            return Err(invalid("density", "dimension differs from the grid's"));
        }
        let n = grid.points_per_side;
        let d = grid.dimension;
        let dk = grid.frequency_step();
        let cell = dk.powi(d as i32);
        // radial symmetry: evaluate once per distinct |m|²
        let max_sq = d * (n / 2) * (n / 2);
        let mut needed = vec![false; max_sq + 1];
        let squares: Vec<usize> = (0..grid.len())
            .map(|flat| {
                grid.unravel(flat)
                    .into_iter()
                    .map(|i| {
                        let m = grid.signed(i);
                        (m * m) as usize
                    })
                    .sum()
            })
            .collect();
        for &s in &squares {
            needed[s] = true;
        }
        let distinct: Vec<usize> = (0..=max_sq).filter(|s| needed[*s]).collect();
        let values: Vec<(usize, f64)> = distinct
            .par_iter()
            .map(|&sq| {
                let omega = dk * (sq as f64).sqrt();
                (sq, density.eval(omega))
            })
            .collect();
        let peak = values.iter().map(|v| v.1).fold(0.0, f64::max);
        let mut table = vec![0.0; max_sq + 1];
        for (sq, v) in values {
            if v.is_nan() || v < -1e-12 * peak.max(f64::MIN_POSITIVE) {
                return Err(Error::NegativeDensity {
                    omega: dk * (sq as f64).sqrt(),
                    value: v,
                });
            }
            table[sq] = v.max(0.0);
        }
        let amplitudes: Vec<f64> = squares.iter().map(|&s| (table[s] * cell).sqrt()).collect();
        let variance = amplitudes.iter().map(|a| a * a).sum();
        Ok(Self {
            grid: grid.clone(),
            amplitudes: Arc::new(amplitudes),
            label: density.label().to_string(),
            variance,
        })
    }

    /// Pointwise variance of sampled fields.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Exact covariance of sampled fields at a lag of `lag_cells` grid steps
    /// along the first axis: `Σ_k f̂(k) Δk^d cos(k₁ h · lag)`.
    pub fn covariance(&self, lag_cells: usize) -> f64 {
        let n = self.grid.points_per_side;
        let stride = n.pow(self.grid.dimension as u32 - 1);
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(flat, a)| {
                let m = self.grid.signed(flat / stride) as f64;
                a * a * (2.0 * PI * m * lag_cells as f64 / n as f64).cos()
            })
            .sum()
    }

    /// Real field `√2 · Re Σ_k A_k ζ_k e^{ik·x}` with `ζ_k` standard complex
    /// Gaussians; its covariance is the periodised `Σ_k f̂(k) Δk^d cos(k·h)`.
    pub fn sample_values(&self, key: StreamKey) -> Vec<f64> {
        let mut rng = key.rng();
        let mut data: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&amp| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re * amp, im * amp)
            })
            .collect();
        inverse_fft_nd(&mut data, self.grid.points_per_side, self.grid.dimension);
        // ζ = (re + i im)/√2, then × √2
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn sample(&self, key: StreamKey, meta: FieldMeta) -> GridField {
        GridField {
            grid: self.grid.clone(),
            values: self.sample_values(key),
            meta,
        }
    }
}

fn stationary_meta(density: &str, seed: u64, variance: f64) -> FieldMeta {
    FieldMeta {
        kind: FieldKind::Stationary,
        t: None,
        eps: None,
        a_const: None,
        kernel_id: None,
        mollifier_id: None,
        density_label: density.to_string(),
        rng_seed: seed,
        layer_count: 1,
        lattice_variance: variance,
    }
}

/// Sample a stationary Gaussian field with the given spectral density.
pub fn sample_stationary(
    grid: &GridSpec,
    density: &SpectralDensity,
    key: StreamKey,
) -> Result<GridField> {
    let spectrum = LatticeSpectrum::new(grid, density)?;
    let meta = stationary_meta(density.label(), key.seed(), spectrum.variance());
    Ok(spectrum.sample(key, meta))
}

// ---------------------------------------------------------------------------
// Martingale approximation

/// Layered sampler for `(X*_{t_1}, X*_{t_2}, …)`: layer `i` carries the
/// increment over `[t_{i-1}, t_i]` (with `t_0 = 0`) and draws from stream
/// `key.child(i)`, so prefixes are reproducible on their own.
#[derive(Debug, Clone)]
pub struct MartingaleSampler {
    kernel_id: String,
    t_nodes: Vec<f64>,
    layers: Vec<LatticeSpectrum>,
}

impl MartingaleSampler {
    pub fn new(k: &SeedKernel, grid: &GridSpec, t_nodes: &[f64]) -> Result<Self> {
        if t_nodes.is_empty() {
            return Err(invalid("t_nodes", "must be nonempty"));
        }
        if t_nodes[0] < 0.0 || t_nodes.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("t_nodes", "must start at ≥ 0 and be nondecreasing"));
        }
        if k.dimension() != grid.dimension {
            return Err(invalid("kernel", "dimension differs from the grid's"));
        }
        let mut layers = Vec::with_capacity(t_nodes.len());
        let mut prev = 0.0;
        for &t in t_nodes {
            let dens = spectrum_increment(k, prev, t)?;
            layers.push(LatticeSpectrum::new(grid, &dens)?);
            prev = t;
        }
        Ok(Self {
            kernel_id: k.id().to_string(),
            t_nodes: t_nodes.to_vec(),
            layers,
        })
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    /// Lattice variance of `X*_{t_i}` for every node.
    pub fn variances(&self) -> Vec<f64> {
        self.layers
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l.variance();
                Some(*acc)
            })
            .collect()
    }

    /// Independent increment field of layer `i`.
    pub fn increment(&self, i: usize, key: StreamKey) -> Vec<f64> {
        self.layers[i].sample_values(key.child(i as u64))
    }

    pub fn sample(&self, key: StreamKey) -> Vec<GridField> {
        let variances = self.variances();
        let mut out: Vec<GridField> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let inc = layer.sample_values(key.child(i as u64));
            let values = match out.last() {
                Some(prev) => prev.values.iter().zip(&inc).map(|(a, b)| a + b).collect(),
                None => inc,
            };
            out.push(GridField {
                grid: layer.grid.clone(),
                values,
                meta: FieldMeta {
                    kind: FieldKind::MartingaleT,
                    t: Some(self.t_nodes[i]),
                    eps: None,
                    a_const: None,
                    kernel_id: Some(self.kernel_id.clone()),
                    mollifier_id: None,
                    density_label: format!("K_t(t={})", self.t_nodes[i]),
                    rng_seed: key.seed(),
                    layer_count: i + 1,
                    lattice_variance: variances[i],
                },
            });
        }
        out
    }
}

/// Cumulative martingale fields at each of `t_nodes`.
pub fn sample_martingale_path(
    k: &SeedKernel,
    grid: &GridSpec,
    t_nodes: &[f64],
    key: StreamKey,
) -> Result<Vec<GridField>> {
    Ok(MartingaleSampler::new(k, grid, t_nodes)?.sample(key))
}

// ---------------------------------------------------------------------------
// Decomposed convolution approximation

/// `t_ε = log(a / ε)`.
pub fn t_eps(a: f64, eps: f64) -> f64 {
    (a / eps).ln()
}

#[derive(Debug, Clone)]
pub struct DecomposedSample {
    pub x_t: GridField,
    pub w_t: GridField,
    pub z_t: GridField,
    pub sum: GridField,
}

/// Sampler for the law of `X*_(ε)` as `X*_{t_ε} + W_{t_ε} + Z_{t_ε}` with the
/// three parts independent.
#[derive(Debug, Clone)]
pub struct DecomposedSampler {
    eps: f64,
    t: f64,
    a: f64,
    kernel_id: String,
    mollifier_id: String,
    martingale: MartingaleSampler,
    w: LatticeSpectrum,
    z: LatticeSpectrum,
}

impl DecomposedSampler {
    pub fn new(
        k: &SeedKernel,
        m: &Mollifier,
        cert: &DecompositionCertificate,
        eps: f64,
        grid: &GridSpec,
    ) -> Result<Self> {
        if !cert.valid {
            return Err(invalid("certificate", "certificate is not valid"));
        }
        let a = cert.a_const;
        if !(eps > 0.0 && eps < a) {
            return Err(invalid("eps", format!("must lie in (0, a = {a}), got {eps}")));
        }
        let t = t_eps(a, eps);
        Ok(Self {
            eps,
            t,
            a,
            kernel_id: k.id().to_string(),
            mollifier_id: m.id().to_string(),
            martingale: MartingaleSampler::new(k, grid, &[t])?,
            w: LatticeSpectrum::new(grid, &spectrum_w_t(k, m, a, t)?)?,
            z: LatticeSpectrum::new(grid, &spectrum_z_t(k, m, a, t)?)?,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Pointwise lattice variances of `(X*_t, W_t, Z_t)`.
    pub fn variances(&self) -> (f64, f64, f64) {
        (
            self.martingale.variances()[0],
            self.w.variance(),
            self.z.variance(),
        )
    }

    fn meta(&self, kind: FieldKind, label: &str, seed: u64, variance: f64) -> FieldMeta {
        FieldMeta {
            kind,
            t: Some(self.t),
            eps: Some(self.eps),
            a_const: Some(self.a),
            kernel_id: Some(self.kernel_id.clone()),
            mollifier_id: Some(self.mollifier_id.clone()),
            density_label: label.to_string(),
            rng_seed: seed,
            layer_count: 1,
            lattice_variance: variance,
        }
    }

    pub fn sample(&self, key: StreamKey) -> DecomposedSample {
        let x_t = self
            .martingale
            .sample(key.tagged("X"))
            .pop()
            .expect("one layer");
        let (vx, vw, vz) = self.variances();
        let w_t = self.w.sample(
            key.tagged("W"),
            self.meta(FieldKind::WT, self.w.label(), key.seed(), vw),
        );
        let z_t = self.z.sample(
            key.tagged("Z"),
            self.meta(FieldKind::ZT, self.z.label(), key.seed(), vz),
        );
        let mut sum = x_t.clone();
        sum.add_assign(&w_t);
        sum.add_assign(&z_t);
        sum.meta = self.meta(FieldKind::Sum, "X_t+W_t+Z_t", key.seed(), vx + vw + vz);
        DecomposedSample { x_t, w_t, z_t, sum }
    }
}

pub fn sample_decomposed_conv(
    k: &SeedKernel,
    m: &Mollifier,
    cert: &DecompositionCertificate,
    eps: f64,
    grid: &GridSpec,
    key: StreamKey,
) -> Result<DecomposedSample> {
    Ok(DecomposedSampler::new(k, m, cert, eps, grid)?.sample(key))
}

/// Dyadic ε-grid `ε_j = a 2^{-j}`, `j = 1..=count`.
pub fn dyadic_eps_grid(a: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|j| a * 0.5f64.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectrum_kt;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 12, 1.0).is_err());
        assert!(GridSpec::new(2, 16, 0.0).is_err());
        let g = GridSpec::new(2, 16, 2.0).unwrap();
        assert_eq!(g.len(), 256);
        assert!((g.cell_volume() - 1.0 / 64.0).abs() < 1e-15);
        assert_eq!(g.point(17), vec![0.125, 0.125]);
    }

    #[test]
    fn zero_density_gives_zero_field() {
        let g = GridSpec::new(2, 16, 1.0).unwrap();
        let f = sample_stationary(&g, &SpectralDensity::zero(2), StreamKey::root(1)).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn negative_density_rejected() {
        let g = GridSpec::new(1, 16, 1.0).unwrap();
        let dens = SpectralDensity::new(1, "bad", 1.0, |s| if s > 10.0 { -1.0 } else { 1.0 });
        assert!(matches!(
            sample_stationary(&g, &dens, StreamKey::root(1)),
            Err(Error::NegativeDensity { .. })
        ));
    }

    #[test]
    fn lattice_variance_is_periodised_covariance_at_zero() {
        // Poisson summation: Σ f̂(k)Δk = Σ_n K_t(nL) ≈ t for a wide box
        let k = SeedKernel::ball(1).unwrap();
        let g = GridSpec::new(1, 4096, 64.0).unwrap();
        let spec = LatticeSpectrum::new(&g, &spectrum_kt(&k, 1.0).unwrap()).unwrap();
        assert!((spec.variance() - 1.0).abs() < 2e-3, "{}", spec.variance());
    }

    #[test]
    fn equal_nodes_give_zero_increment() {
        let k = SeedKernel::ball(1).unwrap();
        let g = GridSpec::new(1, 64, 8.0).unwrap();
        let path = sample_martingale_path(&k, &g, &[1.0, 1.0], StreamKey::root(3)).unwrap();
        assert_eq!(path[0].values, path[1].values);
        assert!(sample_martingale_path(&k, &g, &[2.0, 1.0], StreamKey::root(3)).is_err());
        assert!(sample_martingale_path(&k, &g, &[-1.0], StreamKey::root(3)).is_err());
    }

    #[test]
    fn prefixes_are_reproducible() {
        let k = SeedKernel::ball(2).unwrap();
        let g = GridSpec::new(2, 32, 4.0).unwrap();
        let key = StreamKey::root(9);
        let short = sample_martingale_path(&k, &g, &[1.0], key).unwrap();
        let long = sample_martingale_path(&k, &g, &[1.0, 2.0, 3.0], key).unwrap();
        assert_eq!(short[0].values, long[0].values);
    }

    #[test]
    fn eps_grid_and_t_eps() {
        let a = 0.5;
        assert!((t_eps(a, a * (-1f64).exp()) - 1.0).abs() < 1e-15);
        let grid = dyadic_eps_grid(a, 3);
        assert_eq!(grid, vec![0.25, 0.125, 0.0625]);
    }
}
