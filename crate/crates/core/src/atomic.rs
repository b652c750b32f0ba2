//! The Poisson point measure with intensity `ν(dx) ⊗ z^{-(1+α)} dz` and its
//! integrated atomic measure, sampled with a small-atom cutoff, plus the
//! closed-form Laplace functional and moments.

use std::cell::Cell;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Pareto, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::gmc::{critical_gamma, GridMeasure};
use crate::quad::gauss_legendre;
use crate::rng::{Rng, StreamKey};

/// `α = √(2d)/γ`, checked to lie in `(0, 1)`.
pub fn alpha(d: usize, gamma_: f64) -> Result<f64> {
    let gc = critical_gamma(d);
    if !(gamma_ > gc && gamma_.is_finite()) {
        return Err(invalid(
            "gamma",
            format!("must exceed √(2d) = {gc} for an atomic limit, got {gamma_}"),
        ));
    }
    Ok(gc / gamma_)
}

/// `β(d, γ) = Γ(1 − α)/α`. Grows like `1/α` as `γ → ∞`.
pub fn beta_constant(d: usize, gamma_: f64) -> Result<f64> {
    let a = alpha(d, gamma_)?;
    Ok(gamma(1.0 - a) / a)
}

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

enum IntensityRepr {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        density: Option<(DensityFn, f64)>,
    },
    Grid {
        measure: GridMeasure,
        alias: WeightedAliasIndex<f64>,
    },
}

/// A finite spatial intensity `ν`: Lebesgue on a box, a bounded density on a
/// box, or a grid measure (cells sampled by alias table, then jittered).
#[derive(Clone)]
pub struct Intensity {
    id: String,
    dimension: usize,
    mass: f64,
    repr: Arc<IntensityRepr>,
}

impl fmt::Debug for Intensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Intensity")
            .field("id", &self.id)
            .field("dimension", &self.dimension)
            .field("mass", &self.mass)
            .finish()
    }
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.is_empty() || lo.len() != hi.len() {
        return Err(invalid("box", "corners must be nonempty and of equal length"));
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(invalid("box", "needs lo < hi in every coordinate"));
    }
    Ok(())
}

/// Tensor Gauss–Legendre over a box.
fn box_integral(lo: &[f64], hi: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let d = lo.len();
    let n = match d {
        1 => 64,
        2 => 32,
        3 => 16,
        _ => 8,
    };
    let rule = gauss_legendre(n);
    let axes: Vec<Vec<(f64, f64)>> = (0..d).map(|a| rule.mapped(lo[a], hi[a]).collect()).collect();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (xa, wa) = axes[a][idx[a]];
            x[a] = xa;
            w *= wa;
        }
        total += w * f(&x);
        let mut a = d;
        loop {
            if a == 0 {
                return total;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < n {
                break;
            }
            idx[a] = 0;
        }
    }
}

impl Intensity {
    pub fn lebesgue(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_box(&lo, &hi)?;
        let mass = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        Ok(Self {
            id: format!("lebesgue{lo:?}-{hi:?}"),
            dimension: lo.len(),
            mass,
            repr: Arc::new(IntensityRepr::Box {
                lo,
                hi,
                density: None,
            }),
        })
    }

    /// `f(x) dx` on a box with `0 ≤ f ≤ sup`.
    pub fn with_density(
        lo: Vec<f64>,
        hi: Vec<f64>,
        label: &str,
        sup: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_box(&lo, &hi)?;
        if !(sup > 0.0 && sup.is_finite()) {
            return Err(invalid("sup", "must be positive and finite"));
        }
        let f: DensityFn = Arc::new(f);
        let bad = Cell::new(None);
        let mass = box_integral(&lo, &hi, &|x| {
            let v = f(x);
            if !(0.0..=sup * (1.0 + 1e-12)).contains(&v) {
                bad.set(Some(v));
            }
            v
        });
        if let Some(v) = bad.get() {
            return Err(invalid("density", format!("value {v} outside [0, sup]")));
        }
        Ok(Self {
            id: format!("{label}{lo:?}-{hi:?}"),
            dimension: lo.len(),
            mass,
            repr: Arc::new(IntensityRepr::Box {
                lo,
                hi,
                density: Some((f, sup)),
            }),
        })
    }

    pub fn from_grid(measure: GridMeasure) -> Result<Self> {
        if measure.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(invalid("measure", "weights must be finite and nonnegative"));
        }
        let mass: f64 = measure.weights.iter().sum();
        let alias = if mass > 0.0 {
            WeightedAliasIndex::new(measure.weights.clone())
                .map_err(|e| Error::Degenerate(e.to_string()))?
        } else {
            WeightedAliasIndex::new(vec![1.0]).expect("unit weight")
        };
        Ok(Self {
            id: format!(
                "grid(N={},L={},seed={})",
                measure.grid.points_per_side, measure.grid.side_length, measure.meta.rng_seed
            ),
            dimension: measure.grid.dimension,
            mass,
            repr: Arc::new(IntensityRepr::Grid { measure, alias }),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `ν(D)`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Cell size of a grid intensity, the resolution limit of atom locations.
    pub fn resolution(&self) -> Option<f64> {
        match &*self.repr {
            IntensityRepr::Grid { measure, .. } => Some(measure.grid.spacing()),
            _ => None,
        }
    }

    /// `∫ g dν`; grid measures use cell midpoints.
    pub fn integrate(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        match &*self.repr {
            IntensityRepr::Box { lo, hi, density } => match density {
                None => box_integral(lo, hi, g),
                Some((f, _)) => box_integral(lo, hi, &|x| f(x) * g(x)),
            },
            IntensityRepr::Grid { measure, .. } => {
                let half = 0.5 * measure.grid.spacing();
                measure
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(i, w)| {
                        let x: Vec<f64> = measure.grid.point(i).iter().map(|c| c + half).collect();
                        w * g(&x)
                    })
                    .sum()
            }
        }
    }

    /// `∫ g dν / ν(D)`, zero for the null intensity.
    pub fn mean_of(&self, g: &dyn Fn(&[f64]) -> f64) -> f64 {
        if self.mass > 0.0 {
            self.integrate(g) / self.mass
        } else {
            0.0
        }
    }

    /// The intensity `f(x)^p ν(dx)` for a box intensity with a bounded `f ≥ 0`.
    pub fn power_tilt(
        &self,
        label: &str,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        f_sup: f64,
        p: f64,
    ) -> Result<Self> {
        match &*self.repr {
            IntensityRepr::Box { lo, hi, density } => {
                let base = density.clone();
                let sup = f_sup.powf(p) * base.as_ref().map_or(1.0, |b| b.1);
                Self::with_density(lo.clone(), hi.clone(), label, sup, move |x| {
                    let v = f(x).powf(p);
                    base.as_ref().map_or(v, |(g, _)| v * g(x))
                })
            }
            IntensityRepr::Grid { .. } => Err(Error::Precondition(
                "power tilts are supported for box intensities only".into(),
            )),
        }
    }

    fn sample_location(&self, rng: &mut Rng) -> Vec<f64> {
        match &*self.repr {
            IntensityRepr::Box { lo, hi, density } => loop {
                let x: Vec<f64> = lo
                    .iter()
                    .zip(hi)
                    .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                    .collect();
                match density {
                    None => return x,
                    Some((f, sup)) => {
                        if rng.random::<f64>() * sup < f(&x) {
                            return x;
                        }
                    }
                }
            },
            IntensityRepr::Grid { measure, alias } => {
                let cell = alias.sample(rng);
                let h = measure.grid.spacing();
                measure
                    .grid
                    .point(cell)
                    .into_iter()
                    .map(|c| c + h * rng.random::<f64>())
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeta {
    pub gamma: f64,
    pub d: usize,
    pub alpha: f64,
    pub z_min: f64,
    pub compensator_mass: f64,
    pub intensity_id: String,
    pub intensity_mass: f64,
    pub intensity_resolution: Option<f64>,
    pub rng_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<Atom>,
    pub meta: AtomicMeta,
}

impl AtomicMeasure {
    /// Atom masses plus the compensator.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.z).sum::<f64>() + self.meta.compensator_mass
    }

    /// `Σ z_i φ(x_i)` plus the compensator spread as `ν`, where `phi_mean` is
    /// `∫ φ dν / ν(D)`.
    pub fn pair(&self, phi: &dyn Fn(&[f64]) -> f64, phi_mean: f64) -> f64 {
        self.atoms.iter().map(|a| a.z * phi(&a.x)).sum::<f64>()
            + self.meta.compensator_mass * phi_mean
    }
}

/// Expected number of atoms above `z_min`: `ν(D) z_min^{-α}/α`.
pub fn expected_atom_count(nu_mass: f64, alpha: f64, z_min: f64) -> f64 {
    nu_mass * z_min.powf(-alpha) / alpha
}

/// Expected mass below `z_min`: `ν(D) z_min^{1-α}/(1-α)`.
pub fn small_atom_mass(nu_mass: f64, alpha: f64, z_min: f64) -> f64 {
    nu_mass * z_min.powf(1.0 - alpha) / (1.0 - alpha)
}

/// Variance of the mass below `z_min`: `ν(D) z_min^{2-α}/(2-α)`.
pub fn small_atom_variance(nu_mass: f64, alpha: f64, z_min: f64) -> f64 {
    nu_mass * z_min.powf(2.0 - alpha) / (2.0 - alpha)
}

fn check_z_min(z_min: f64) -> Result<()> {
    if !(z_min > 0.0 && z_min.is_finite()) {
        return Err(invalid("z_min", format!("must be positive, got {z_min}")));
    }
    Ok(())
}

fn draw_masses(
    rng: &mut Rng,
    nu_mass: f64,
    alpha: f64,
    z_min: f64,
    mut each: impl FnMut(&mut Rng, f64),
) {
    let mean = expected_atom_count(nu_mass, alpha, z_min);
    if mean <= 0.0 {
        return;
    }
    let count = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
    let pareto = Pareto::new(z_min, alpha).expect("valid Pareto");
    for _ in 0..count {
        let z = pareto.sample(rng);
        each(rng, z);
    }
}

/// Sample the atoms of mass `≥ z_min`. With `compensate`, the expected mass
/// of the discarded atoms is stored as `compensator_mass`.
pub fn sample_atomic(
    nu: &Intensity,
    gamma_: f64,
    z_min: f64,
    compensate: bool,
    key: StreamKey,
) -> Result<AtomicMeasure> {
    check_z_min(z_min)?;
    let d = nu.dimension();
    let a = alpha(d, gamma_)?;
    let mut rng = key.rng();
    let mut atoms = Vec::new();
    draw_masses(&mut rng, nu.mass(), a, z_min, |rng, z| {
        let x = nu.sample_location(rng);
        atoms.push(Atom { x, z });
    });
    Ok(AtomicMeasure {
        atoms,
        meta: AtomicMeta {
            gamma: gamma_,
            d,
            alpha: a,
            z_min,
            compensator_mass: if compensate {
                small_atom_mass(nu.mass(), a, z_min)
            } else {
                0.0
            },
            intensity_id: nu.id().to_string(),
            intensity_mass: nu.mass(),
            intensity_resolution: nu.resolution(),
            rng_seed: key.seed(),
            master_seed: None,
            config_hash: None,
        },
    })
}

/// Total mass only, skipping locations.
pub fn sample_total_mass(
    nu_mass: f64,
    d: usize,
    gamma_: f64,
    z_min: f64,
    compensate: bool,
    key: StreamKey,
) -> Result<f64> {
    check_z_min(z_min)?;
    let a = alpha(d, gamma_)?;
    let mut rng = key.rng();
    let mut total = 0.0;
    draw_masses(&mut rng, nu_mass, a, z_min, |_, z| total += z);
    if compensate {
        total += small_atom_mass(nu_mass, a, z_min);
    }
    Ok(total)
}

/// `exp(−β ∫ φ^α dν)`.
pub fn laplace_closed_form(nu: &Intensity, phi: &dyn Fn(&[f64]) -> f64, gamma_: f64) -> Result<f64> {
    let a = alpha(nu.dimension(), gamma_)?;
    let b = beta_constant(nu.dimension(), gamma_)?;
    let negative = Cell::new(None);
    let integral = nu.integrate(&|x| {
        let v = phi(x);
        if v < 0.0 {
            negative.set(Some(v));
        }
        v.max(0.0).powf(a)
    });
    if let Some(v) = negative.get() {
        return Err(invalid("phi", format!("must be nonnegative, found {v}")));
    }
    Ok((-b * integral).exp())
}

/// `E[M^q] = (β ν)^{q/α} Γ(−q/α) / (α Γ(−q))` for `0 < q < α`.
pub fn fractional_moment_closed_form(nu_mass: f64, q: f64, gamma_: f64, d: usize) -> Result<f64> {
    let a = alpha(d, gamma_)?;
    if !(q > 0.0 && q < a) {
        return Err(invalid("q", format!("must lie in (0, α = {a}), got {q}")));
    }
    if !(nu_mass > 0.0) {
        return Err(invalid("nu_mass", "must be positive"));
    }
    let b = beta_constant(d, gamma_)?;
    Ok((b * nu_mass).powf(q / a) * gamma(-q / a) / (a * gamma(-q)))
}

/// `E[M^{−q}] = (β ν)^{−q/α} Γ(q/α) / (α Γ(q))` for `q > 0`.
pub fn negative_moment_closed_form(nu_mass: f64, q: f64, gamma_: f64, d: usize) -> Result<f64> {
    let a = alpha(d, gamma_)?;
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid("q", format!("must be positive, got {q}")));
    }
    if !(nu_mass > 0.0) {
        return Err(invalid("nu_mass", "must be positive"));
    }
    let b = beta_constant(d, gamma_)?;
    Ok((b * nu_mass).powf(-q / a) * gamma(q / a) / (a * gamma(q)))
}

/// Sidecar path for an atom CSV: `atoms.csv` → `atoms.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Write atoms as CSV `x1,…,xd,z` plus the JSON meta sidecar.
pub fn write_atoms(csv_path: &Path, measure: &AtomicMeasure) -> Result<()> {
    let d = measure.meta.d;
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::Format(e.to_string()))?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("z".into());
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for atom in &measure.atoms {
        let row: Vec<String> = atom
            .x
            .iter()
            .chain(std::iter::once(&atom.z))
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    let mut meta = BufWriter::new(File::create(meta_path(csv_path))?);
    serde_json::to_writer_pretty(&mut meta, &measure.meta)?;
    meta.write_all(b"\n")?;
    meta.flush()?;
    Ok(())
}

pub fn read_atoms(csv_path: &Path) -> Result<AtomicMeasure> {
    let meta: AtomicMeta = serde_json::from_reader(File::open(meta_path(csv_path))?)?;
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| Error::Format(e.to_string()))?;
    let mut atoms = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != meta.d + 1 {
            return Err(Error::Format(format!("expected {} columns", meta.d + 1)));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Format(e.to_string())))
            .collect::<Result<_>>()?;
        let z = vals[meta.d];
        atoms.push(Atom {
            x: vals[..meta.d].to_vec(),
            z,
        });
    }
    Ok(AtomicMeasure { atoms, meta })
}
