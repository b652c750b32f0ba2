//! Run context and verification suites.

use std::cell::OnceCell;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chaoscope::atomic::{
    alpha, fractional_moment_closed_form, laplace_closed_form, negative_moment_closed_form,
    sample_atomic, sample_total_mass, small_atom_mass, small_atom_variance, Intensity,
};
use chaoscope::fields::{dyadic_eps_grid, t_eps, DecomposedSampler, GridField, GridSpec, LatticeSpectrum, MartingaleSampler};
use chaoscope::gmc::GridMeasure;
use chaoscope::kernels::{standard_mollifier, validate_seed, Mollifier, SeedKernel};
use chaoscope::rng::StreamKey;
use chaoscope::snapshot::{field_header, measure_header, write_snapshot};
use chaoscope::spectral::{
    certify_constant, find_admissible_a, identity_rows, k_hat_w, spectrum_conv, spectrum_kt,
    DecompositionCertificate, FrequencyScan, DEFAULT_RELATIVE_TOL,
};
use chaoscope::stats::{
    hill_index, kahane_battery, multifractal_fit, replica_map, try_replica_map, EnsembleSummary,
};
use serde_json::json;

use crate::config::{KernelSpec, RunConfig};
use crate::report::{num_rows, strings, write_csv, write_json, Check, SuiteReport};

/// Largest standardised deviation accepted by the sampled covariance checks.
const COVARIANCE_Z: f64 = 4.0;
/// Tolerance on the decomposition identity.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance on the minima of `K̂_W` and `K̂_{Z,t}`.
pub const SIGN_TOL: f64 = 1e-12;

/// Raw per-replica scalars of a suite.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Tolerance on `K(0) = 1` for tabulated kernels, whose transform is
/// computed by quadrature of the interpolated table.
pub const TABLE_VARIANCE_TOL: f64 = 1e-6;

/// Reject tables with the wrong variance or a negative spectrum; warn about
/// the other scan-based checks.
fn check_table_kernel(k: &SeedKernel) -> Result<()> {
    let radii: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
    let report = validate_seed(k, &radii)?;
    let k0 = k.radial_eval(0.0);
    if (k0 - 1.0).abs() > TABLE_VARIANCE_TOL {
        bail!("K(0) = {k0}, expected 1 (the table must have unit variance)");
    }
    if report.check("K1:hat_nonnegative").is_some_and(|c| !c.passed) {
        bail!("the spectral profile takes negative values");
    }
    for c in report.checks.iter().filter(|c| !c.passed && c.name != "K1:unit_variance") {
        eprintln!("warning: kernel check {} fails by {:.3e}", c.name, c.violation());
    }
    Ok(())
}

/// Cache entry; the key covers only what the certificate depends on, so the
/// hash and seed are those of the run that wrote it.
#[derive(serde::Serialize, serde::Deserialize)]
struct CachedCertificate {
    config_hash: String,
    seed: u64,
    certificate: DecompositionCertificate,
}

/// Resolved configuration plus the objects every command needs.
pub struct Run {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
    pub kernel: SeedKernel,
    pub mollifier: Mollifier,
    cert: OnceCell<DecompositionCertificate>,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let d = cfg.regime.d;
        let kernel = match &cfg.kernel {
            KernelSpec::Ball => SeedKernel::ball(d)?,
            KernelSpec::Table { path } => SeedKernel::from_table_file(path, d)
                .with_context(|| format!("loading kernel table {}", path.display()))?,
        };
        if let KernelSpec::Table { path } = &cfg.kernel {
            check_table_kernel(&kernel).with_context(|| format!("kernel table {}", path.display()))?;
        }
        let mollifier = standard_mollifier(d, cfg.mollifier.order)?;
        Ok(Self {
            hash: cfg.hash(),
            out: cfg.out.clone(),
            cfg,
            kernel,
            mollifier,
            cert: OnceCell::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed
    }

    pub fn key(&self, tag: &str) -> StreamKey {
        StreamKey::root(self.cfg.seed).tagged(tag)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = &self.cfg.grid;
        Ok(GridSpec::new(self.cfg.regime.d, g.points_per_side, g.side_length)?)
    }

    /// Positive times of the t-grid.
    pub fn sample_times(&self) -> Vec<f64> {
        self.cfg.regime.t_grid.iter().copied().filter(|t| *t > 0.0).collect()
    }

    /// Largest time whose scale `e^{-t}` the grid still resolves: `e^t` at
    /// most the Nyquist frequency `π N/L`.
    pub fn resolved_time(&self) -> f64 {
        let g = &self.cfg.grid;
        (std::f64::consts::PI * g.points_per_side as f64 / g.side_length).ln()
    }

    /// Warn about sample times beyond the grid resolution.
    pub fn warn_unresolved(&self, times: &[f64]) {
        let limit = self.resolved_time();
        if let Some(t) = times.iter().find(|t| **t > limit) {
            eprintln!("warning: t = {t} exceeds the grid resolution (ln(πN/L) = {limit:.3}); finer layers alias");
        }
    }

    /// Decomposition certificate, read from or written to the cache.
    pub fn certificate(&self) -> Result<&DecompositionCertificate> {
        if let Some(c) = self.cert.get() {
            return Ok(c);
        }
        let path = self.out.join("cache").join(self.cfg.certificate_key()).join("certificate.json");
        let cert = if path.exists() {
            crate::report::read_json::<CachedCertificate>(&path)?.certificate
        } else {
            let scan = FrequencyScan::default();
            let t_grid = &self.cfg.regime.t_grid;
            let cert = match self.cfg.regime.a {
                None => find_admissible_a(&self.kernel, &self.mollifier, &scan, DEFAULT_RELATIVE_TOL, t_grid)?,
                Some(a) => certify_constant(&self.kernel, &self.mollifier, &scan, DEFAULT_RELATIVE_TOL, t_grid, a)?,
            };
            let cached = CachedCertificate {
                config_hash: self.hash.clone(),
                seed: self.seed(),
                certificate: cert,
            };
            write_json(&path, &cached)?;
            cached.certificate
        };
        Ok(self.cert.get_or_init(|| cert))
    }

    /// Certificate that must be valid for sampling.
    pub fn valid_certificate(&self) -> Result<&DecompositionCertificate> {
        let cert = self.certificate()?;
        if !cert.valid {
            bail!("a = {} fails the sign test; no decomposition is available", cert.a_const);
        }
        Ok(cert)
    }

    /// ε-grid from the config or `a·2^{-j}`, `j = 1..=3`.
    pub fn eps_grid(&self) -> Result<Vec<f64>> {
        let a = self.valid_certificate()?.a_const;
        let eps = self.cfg.regime.eps_grid.clone().unwrap_or_else(|| dyadic_eps_grid(a, 3));
        if let Some(e) = eps.iter().find(|e| **e >= a) {
            bail!("eps = {e} is not below the certified a = {a}");
        }
        Ok(eps)
    }

    pub fn write_field(&self, path: &Path, field: &GridField) -> Result<()> {
        let mut header = field_header(field, Some(&self.hash));
        header.master_seed = Some(self.seed());
        std::fs::create_dir_all(path.parent().expect("file in a directory"))?;
        Ok(write_snapshot(path, &header, &field.values)?)
    }

    pub fn write_measure(&self, path: &Path, measure: &GridMeasure) -> Result<()> {
        let mut header = measure_header(measure, Some(&self.hash));
        header.master_seed = Some(self.seed());
        std::fs::create_dir_all(path.parent().expect("file in a directory"))?;
        Ok(write_snapshot(path, &header, &measure.weights)?)
    }

    fn report(&self, suite: &str, checks: Vec<Check>, data: serde_json::Value) -> SuiteReport {
        SuiteReport::new(suite, &self.hash, self.seed(), checks, data)
    }

    /// Run one suite by name.
    pub fn suite(&self, name: &str) -> Result<(SuiteReport, Table)> {
        match name {
            "decomp" => self.decomp(),
            "spectrum" => self.spectrum(),
            "laplace" => self.laplace(),
            "moments" => self.moments(),
            "tails" => self.tails(),
            "kahane" => self.kahane(),
            other => bail!("unknown suite `{other}`"),
        }
    }

    /// Certificate JSON and per-t identity tables under `decomposition/`.
    pub fn write_decomposition(&self) -> Result<&DecompositionCertificate> {
        let cert = self.certificate()?;
        let dir = self.out.join("decomposition");
        let (k, m, a) = (&self.kernel, &self.mollifier, cert.a_const);
        let doc = json!({
            "config_hash": self.hash,
            "seed": self.seed(),
            "a_const": a,
            "kernel_id": cert.kernel_id,
            "mollifier_id": cert.mollifier_id,
            "t_grid": cert.t_grid,
            "identity_residual": cert.per_t.iter().map(|c| c.identity_residual).collect::<Vec<_>>(),
            "max_identity_residual": cert.identity_residual,
            "min_KW": cert.min_kw,
            "min_KZ": cert.min_kz,
            "sup_KZ": cert.per_t.iter().map(|c| c.sup_kz).collect::<Vec<_>>(),
            "z_variance": cert.per_t.iter().map(|c| c.z_variance).collect::<Vec<_>>(),
            "tol": cert.tol,
            "scan_spec": cert.scan_spec,
            "valid": cert.valid,
            "attempts": cert.attempts,
        });
        write_json(&dir.join("certificate.json"), &doc)?;
        let nodes = cert.scan_spec.nodes();
        let kw: Vec<f64> = nodes.iter().map(|&s| k_hat_w(k, m, a, s)).collect::<chaoscope::Result<_>>()?;
        let header = strings(&["omega", "K_W", "K_W_t", "K_Z_t", "Delta", "residual"]);
        for &t in &cert.t_grid {
            let rows = identity_rows(k, m, a, t, &nodes)?;
            let rows = num_rows(
                rows.iter()
                    .zip(&kw)
                    .map(|(r, w)| vec![r.omega, *w, r.k_w_t, r.k_z, r.delta, r.residual()]),
            );
            write_csv(&dir.join(format!("identity_t={t}.csv")), &self.hash, self.seed(), &header, &rows)?;
        }
        Ok(cert)
    }

    fn decomp(&self) -> Result<(SuiteReport, Table)> {
        let cert = self.write_decomposition()?;
        let mut checks = vec![
            Check::holds("certificate_valid", cert.valid, format!("a = {}", cert.a_const)),
            Check::at_least("min_KW", cert.min_kw, -SIGN_TOL, ""),
            Check::at_least("min_KZ", cert.min_kz, -SIGN_TOL, ""),
        ];
        for c in &cert.per_t {
            checks.push(Check::at_most(format!("identity_residual_t={}", c.t), c.identity_residual, IDENTITY_TOL, ""));
        }
        let sups: Vec<f64> = cert.per_t.iter().map(|c| c.sup_kz).collect();
        checks.push(Check::holds(
            "sup_KZ_nonincreasing",
            sups.windows(2).all(|w| w[1] <= w[0]),
            format!("{sups:?}"),
        ));
        let rows = num_rows(
            cert.per_t
                .iter()
                .map(|c| vec![c.t, c.identity_residual, c.min_kz, c.sup_kz, c.z_variance]),
        );
        let table = Table {
            header: strings(&["t", "identity_residual", "min_KZ", "sup_KZ", "z_variance"]),
            rows,
        };
        let data = json!({ "a_const": cert.a_const, "attempts": cert.attempts });
        Ok((self.report("decomp", checks, data), table))
    }

    /// Lags in cells: multiples of one unit length, at most half the box.
    fn lags(&self, grid: &GridSpec) -> Vec<usize> {
        let n = grid.points_per_side;
        let step = ((n as f64 / grid.side_length).round() as usize).max(1);
        let mut lags: Vec<usize> = (0..=self.cfg.sampler.lags).map(|j| j * step).filter(|l| *l <= n / 2).collect();
        lags.dedup();
        lags
    }

    /// Sampled lag covariances against the lattice covariance.
    fn spectrum(&self) -> Result<(SuiteReport, Table)> {
        let grid = self.grid()?;
        let lags = self.lags(&grid);
        let replicas = self.cfg.sampler.replicas;
        let mut checks = Vec::new();
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        let mut data = Vec::new();
        let mut groups: Vec<(String, Vec<Vec<f64>>, Vec<f64>)> = Vec::new();
        let times = self.sample_times();
        if !times.is_empty() {
            let sampler = MartingaleSampler::new(&self.kernel, &grid, &times)?;
            let products = replica_map(replicas, self.key("spectrum").tagged("martingale"), |_, key| {
                sampler
                    .sample(key)
                    .iter()
                    .map(|f| lags.iter().map(|&l| f.lagged_product(f, l)).collect::<Vec<_>>())
                    .collect::<Vec<_>>()
            });
            for (i, &t) in times.iter().enumerate() {
                let spec = LatticeSpectrum::new(&grid, &spectrum_kt(&self.kernel, t)?)?;
                let targets = lags.iter().map(|&l| spec.covariance(l)).collect();
                let per = products.iter().map(|p| p[i].clone()).collect();
                groups.push((format!("X_t={t}"), per, targets));
            }
        }

        let cert = self.valid_certificate()?;
        let a = cert.a_const;
        for (i, &eps) in self.eps_grid()?.iter().enumerate() {
            let sampler = DecomposedSampler::new(&self.kernel, &self.mollifier, cert, eps, &grid)?;
            let conv = LatticeSpectrum::new(&grid, &spectrum_conv(&self.kernel, &self.mollifier, a, t_eps(a, eps))?)?;
            let (vx, vw, vz) = sampler.variances();
            let gap = (vx + vw + vz - conv.variance()).abs() / conv.variance().max(1.0);
            checks.push(Check::at_most(format!("parts_sum_eps={eps}"), gap, 1e-9, "relative variance gap"));
            let products = replica_map(replicas, self.key("spectrum").tagged("decomposed").child(i as u64), |_, key| {
                let s = sampler.sample(key);
                lags.iter().map(|&l| s.sum.lagged_product(&s.sum, l)).collect::<Vec<_>>()
            });
            let targets = lags.iter().map(|&l| conv.covariance(l)).collect();
            groups.push((format!("conv_eps={eps}"), products, targets));
        }

        for (label, products, targets) in groups {
            let mut worst: f64 = 0.0;
            for (j, (&lag, target)) in lags.iter().zip(&targets).enumerate() {
                let values: Vec<f64> = products.iter().map(|p| p[j]).collect();
                let s = EnsembleSummary::from_values(values.clone(), 0)?;
                let z = (s.mean - target).abs() / s.se;
                worst = worst.max(z);
                data.push(json!({"field": label, "lag": lag, "mean": s.mean, "se": s.se, "target": target}));
                columns.push((format!("{label}_lag={lag}"), values));
            }
            checks.push(Check::at_most(format!("{label}_covariance_z"), worst, COVARIANCE_Z, "max over lags"));
        }

        let mut header = vec!["replica".to_string()];
        header.extend(columns.iter().map(|c| c.0.clone()));
        let rows = num_rows((0..replicas).map(|r| {
            std::iter::once(r as f64).chain(columns.iter().map(|c| c.1[r])).collect()
        }));
        Ok((self.report("spectrum", checks, json!({ "lags": data })), Table { header, rows }))
    }

    fn alpha(&self) -> Result<f64> {
        Ok(alpha(self.cfg.regime.d, self.cfg.regime.gamma)?)
    }

    /// Bias bound of `E exp(−μ(φ))` from dropping atoms below `z_min`.
    fn laplace_bias(&self, nu_mass: f64, phi_sup: f64) -> Result<f64> {
        let (a, z) = (self.alpha()?, self.cfg.sampler.z_min);
        Ok(if self.cfg.sampler.compensate {
            0.5 * small_atom_variance(nu_mass, a, z) * phi_sup * phi_sup
        } else {
            small_atom_mass(nu_mass, a, z) * phi_sup
        })
    }

    /// Laplace functionals of the atomic measure on the unit cube.
    fn laplace(&self) -> Result<(SuiteReport, Table)> {
        let (d, gamma) = (self.cfg.regime.d, self.cfg.regime.gamma);
        let (z_min, compensate) = (self.cfg.sampler.z_min, self.cfg.sampler.compensate);
        let replicas = self.cfg.sampler.replicas;
        let a = self.alpha()?;
        let nu = Intensity::lebesgue(vec![0.0; d], vec![1.0; d])?;
        let one = |_: &[f64]| 1.0;
        let phi = move |x: &[f64]| 0.5 + x[d - 1];
        let f = |x: &[f64]| 1.0 + x[0];
        let fphi = move |x: &[f64]| f(x) * phi(x);
        let tilted = nu.power_tilt("tilt(1+x1)", f, 2.0, a)?;
        let (phi_mean, fphi_mean, tilted_mean) = (nu.mean_of(&phi), nu.mean_of(&fphi), tilted.mean_of(&phi));

        let key = self.key("laplace");
        let rows = try_replica_map(replicas, key, |_, k| {
            let m = sample_atomic(&nu, gamma, z_min, compensate, k.tagged("base"))?;
            let t = sample_atomic(&tilted, gamma, z_min, compensate, k.tagged("tilted"))?;
            Ok(vec![
                (-m.pair(&one, 1.0)).exp(),
                (-m.pair(&phi, phi_mean)).exp(),
                (-m.pair(&fphi, fphi_mean)).exp(),
                (-t.pair(&phi, tilted_mean)).exp(),
            ])
        })?;
        let column = |j: usize| EnsembleSummary::from_values(rows.iter().map(|r| r[j]).collect(), 0);
        let (s_one, s_phi, s_lhs, s_rhs) = (column(0)?, column(1)?, column(2)?, column(3)?);

        let mut checks = Vec::new();
        let mut data = serde_json::Map::new();
        let mut versus = |name: &str, s: &EnsembleSummary, target: f64, bias: f64| {
            let dev = (s.mean - target).abs();
            let limit = 3.0 * s.se + bias;
            checks.push(Check::at_most(name, dev, limit, format!("mean {} se {} closed form {target}", s.mean, s.se)));
            data.insert(name.into(), json!({"mean": s.mean, "se": s.se, "closed_form": target, "bias_bound": bias}));
        };
        let c_one = laplace_closed_form(&nu, &one, gamma)?;
        let c_phi = laplace_closed_form(&nu, &phi, gamma)?;
        let c_tilt = laplace_closed_form(&tilted, &phi, gamma)?;
        let b_lhs = self.laplace_bias(nu.mass(), 3.0)?;
        let b_rhs = self.laplace_bias(tilted.mass(), 1.5)?;
        versus("constant_phi", &s_one, c_one, self.laplace_bias(nu.mass(), 1.0)?);
        versus("linear_phi", &s_phi, c_phi, self.laplace_bias(nu.mass(), 1.5)?);
        versus("tilt_lhs", &s_lhs, c_tilt, b_lhs);
        versus("tilt_rhs", &s_rhs, c_tilt, b_rhs);
        let se = (s_lhs.se.powi(2) + s_rhs.se.powi(2)).sqrt();
        checks.push(Check::at_most(
            "tilt_identity",
            (s_lhs.mean - s_rhs.mean).abs(),
            3.0 * se + b_lhs + b_rhs,
            "f·P[ν] against P[f^α ν]",
        ));
        let table = Table {
            header: strings(&["replica", "exp_neg_mass", "exp_neg_phi", "exp_neg_fphi", "exp_neg_tilted_phi"]),
            rows: num_rows(rows.iter().enumerate().map(|(i, r)| [vec![i as f64], r.clone()].concat())),
        };
        Ok((self.report("laplace", checks, data.into()), table))
    }

    /// Fractional, negative and multifractal moments of the total mass.
    fn moments(&self) -> Result<(SuiteReport, Table)> {
        let (d, gamma) = (self.cfg.regime.d, self.cfg.regime.gamma);
        let (z_min, compensate) = (self.cfg.sampler.z_min, self.cfg.sampler.compensate);
        let replicas = self.cfg.sampler.replicas;
        let a = self.alpha()?;
        // 2q < α keeps the variance of M^q finite
        let q = self.cfg.sampler.q.unwrap_or(a / 4.0);
        let masses = try_replica_map(replicas, self.key("moments").tagged("mass"), |_, k| {
            sample_total_mass(1.0, d, gamma, z_min, compensate, k)
        })?;
        // A is the mass carried by atoms above z_min, B the rest; the sample
        // replaces B by its mean or by zero
        let comp = if compensate { small_atom_mass(1.0, a, z_min) } else { 0.0 };
        let spread = if compensate {
            small_atom_variance(1.0, a, z_min).sqrt()
        } else {
            small_atom_mass(1.0, a, z_min)
        };
        let big: Vec<f64> = masses.iter().map(|m| m - comp).collect();
        let avg = |g: &dyn Fn(f64) -> f64| big.iter().map(|x| g(*x)).sum::<f64>() / big.len() as f64;

        let mut checks = Vec::new();
        let mut data = serde_json::Map::new();
        let frac = EnsembleSummary::from_values(masses.iter().map(|m| m.powf(q)).collect(), 0)?;
        let target = fractional_moment_closed_form(1.0, q, gamma, d)?;
        let bias = q * avg(&|x| x.powf(q - 1.0)) * spread;
        checks.push(Check::at_most(
            format!("fractional_moment_q={q:.4}"),
            (frac.mean - target).abs(),
            3.0 * frac.se + bias,
            format!("mean {} se {} closed form {target}", frac.mean, frac.se),
        ));
        data.insert("fractional".into(), json!({"q": q, "mean": frac.mean, "se": frac.se, "closed_form": target, "bias_bound": bias}));

        let neg = EnsembleSummary::from_values(masses.iter().map(|m| 1.0 / m).collect(), 0)?;
        let target = negative_moment_closed_form(1.0, 1.0, gamma, d)?;
        let bias = avg(&|x| x.powi(-2)) * spread;
        checks.push(Check::at_most(
            "negative_moment_q=1",
            (neg.mean - target).abs(),
            3.0 * neg.se + bias,
            format!("mean {} se {} closed form {target}", neg.mean, neg.se),
        ));
        data.insert("negative".into(), json!({"q": 1.0, "mean": neg.mean, "se": neg.se, "closed_form": target, "bias_bound": bias}));

        checks.push(Check::holds(
            "moment_at_alpha_rejected",
            fractional_moment_closed_form(1.0, a, gamma, d).is_err(),
            format!("q = α = {a}"),
        ));

        let scales = [0.05, 0.1, 0.2, 0.4, 0.8];
        let fit = multifractal_fit(
            |r, key| {
                let nu = r.powi(d as i32);
                sample_total_mass(nu, d, gamma, z_min * nu.powf(1.0 / a), compensate, key)
            },
            q,
            &scales,
            replicas,
            self.key("moments").tagged("scaling"),
            (d as f64 / 2.0).sqrt() * gamma * q,
        )?;
        checks.push(Check::at_most(
            "multifractal_slope",
            (fit.slope - fit.target).abs(),
            2.0 * fit.slope_se,
            format!("slope {} se {} target {}", fit.slope, fit.slope_se, fit.target),
        ));
        data.insert("multifractal".into(), serde_json::to_value(&fit)?);

        let table = Table {
            header: strings(&["replica", "mass"]),
            rows: num_rows(masses.iter().enumerate().map(|(i, m)| vec![i as f64, *m])),
        };
        Ok((self.report("moments", checks, data.into()), table))
    }

    /// Hill index of the total mass against `α`.
    fn tails(&self) -> Result<(SuiteReport, Table)> {
        let (d, gamma) = (self.cfg.regime.d, self.cfg.regime.gamma);
        let s = &self.cfg.sampler;
        let masses = try_replica_map(s.tail_samples, self.key("tails"), |_, k| {
            sample_total_mass(1.0, d, gamma, s.z_min, s.compensate, k)
        })?;
        let h = hill_index(&masses, s.top_fraction)?;
        let a = self.alpha()?;
        let rel = (h.index - a).abs() / a;
        let checks = vec![Check::at_most(
            "hill_relative_error",
            rel,
            0.1,
            format!("Hill {} (k = {}) against α = {a}", h.index, h.k),
        )];
        let data = json!({"hill": h, "alpha": a});
        let table = Table {
            header: strings(&["replica", "mass"]),
            rows: num_rows(masses.iter().enumerate().map(|(i, m)| vec![i as f64, *m])),
        };
        Ok((self.report("tails", checks, data), table))
    }

    /// Kahane's inequality on random dominated covariance pairs.
    fn kahane(&self) -> Result<(SuiteReport, Table)> {
        let s = &self.cfg.sampler;
        let b = kahane_battery(s.kahane_pairs, s.replicas, self.key("kahane"))?;
        let checks = vec![Check::at_most(
            "violations",
            b.violations as f64,
            0.0,
            format!("{} pairs", b.cases.len()),
        )];
        let rows = b
            .cases
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let r = &c.result;
                let mut row = vec![i.to_string(), c.size.to_string(), c.convex.clone()];
                row.extend([r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.diff_se].iter().map(f64::to_string));
                row.push(r.violated.to_string());
                row
            })
            .collect();
        let table = Table {
            header: strings(&["case", "size", "convex", "lhs", "lhs_se", "rhs", "rhs_se", "diff_se", "violated"]),
            rows,
        };
        Ok((self.report("kahane", checks, json!({"pairs": b.cases.len(), "violations": b.violations})), table))
    }
}
