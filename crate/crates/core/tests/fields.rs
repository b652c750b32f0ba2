use chaoscope::fields::{
    t_eps, DecomposedSampler, GridSpec, LatticeSpectrum, MartingaleSampler,
};
use chaoscope::kernels::{standard_mollifier, SeedKernel};
use chaoscope::rng::StreamKey;
use chaoscope::spectral::{
    find_admissible_a, spectrum_conv, spectrum_kt, spectrum_w_t, spectrum_z_t,
    DecompositionCertificate, FrequencyScan, DEFAULT_RELATIVE_TOL, DEFAULT_T_GRID,
};
use chaoscope::stats::{replica_map, skewness_kurtosis, EnsembleSummary};

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

fn sinc(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.sin() / y
    }
}

/// Continuum covariance of the martingale approximation at time `s` and lag
/// `h` for the one-dimensional ball kernel: `∫₀^s sinc(e^u h) du`.
fn martingale_cov(s: f64, h: f64) -> f64 {
    simpson(0.0, s, 20_000, |u| sinc(u.exp() * h))
}

fn certificate() -> (SeedKernel, chaoscope::kernels::Mollifier, DecompositionCertificate) {
    let k = SeedKernel::ball(1).unwrap();
    let m = standard_mollifier(1, 1).unwrap();
    let cert = find_admissible_a(&k, &m, &FrequencyScan::default(), DEFAULT_RELATIVE_TOL, &DEFAULT_T_GRID)
        .unwrap();
    (k, m, cert)
}

fn summary(values: Vec<f64>) -> EnsembleSummary {
    EnsembleSummary::from_values(values, 0).unwrap()
}

#[test]
fn lattice_covariance_approximates_continuum() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 8192, 1024.0).unwrap();
    let spec = LatticeSpectrum::new(&grid, &spectrum_kt(&k, 2.0).unwrap()).unwrap();
    let h = grid.spacing();
    for lag in [0usize, 4, 16, 64] {
        let oracle = martingale_cov(2.0, lag as f64 * h);
        assert!(
            (spec.covariance(lag) - oracle).abs() < 1e-2,
            "lag {lag}: {} vs {oracle}",
            spec.covariance(lag)
        );
    }
    assert!((spec.variance() - spec.covariance(0)).abs() < 1e-14);
}

#[test]
fn periodisation_shrinks_with_box_size() {
    let k = SeedKernel::ball(1).unwrap();
    let density = spectrum_kt(&k, 1.0).unwrap();
    let small = LatticeSpectrum::new(&GridSpec::new(1, 256, 32.0).unwrap(), &density).unwrap();
    let large = LatticeSpectrum::new(&GridSpec::new(1, 512, 64.0).unwrap(), &density).unwrap();
    let huge = LatticeSpectrum::new(&GridSpec::new(1, 8192, 1024.0).unwrap(), &density).unwrap();
    // lag of one unit length in each grid
    let lag = |n: usize, l: f64| (n as f64 / l) as usize;
    let c_small = small.covariance(lag(256, 32.0));
    let c_large = large.covariance(lag(512, 64.0));
    let c_huge = huge.covariance(lag(8192, 1024.0));
    assert!((c_large - c_huge).abs() < (c_small - c_huge).abs() + 1e-12);
    assert!((c_huge - martingale_cov(1.0, 1.0)).abs() < 5e-3);
}

#[test]
fn martingale_has_independent_increments() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 256, 64.0).unwrap();
    let sampler = MartingaleSampler::new(&k, &grid, &[1.0, 2.0]).unwrap();
    let lag = 4;
    let target = LatticeSpectrum::new(&grid, &spectrum_kt(&k, 1.0).unwrap())
        .unwrap()
        .covariance(lag);
    let pairs = replica_map(400, StreamKey::root(11), |_, key| {
        let path = sampler.sample(key);
        let inc: Vec<f64> = path[1].values.iter().zip(&path[0].values).map(|(b, a)| b - a).collect();
        let mut inc_field = path[1].clone();
        inc_field.values = inc;
        (path[0].lagged_product(&path[1], lag), path[0].lagged_product(&inc_field, 0))
    });
    let cross = summary(pairs.iter().map(|p| p.0).collect());
    let indep = summary(pairs.iter().map(|p| p.1).collect());
    assert!(cross.within(target, 4.0, 0.0), "{} vs {target} ± {}", cross.mean, cross.se);
    assert!(indep.within(0.0, 4.0, 0.0), "{} ± {}", indep.mean, indep.se);

    let v = sampler.variances();
    assert!(v[0] < v[1]);
    assert_eq!(sampler.t_nodes(), &[1.0, 2.0]);
}

#[test]
fn martingale_prefix_is_reproducible() {
    let k = SeedKernel::ball(2).unwrap();
    let grid = GridSpec::new(2, 32, 8.0).unwrap();
    let one = MartingaleSampler::new(&k, &grid, &[1.0]).unwrap().sample(StreamKey::root(5));
    let two = MartingaleSampler::new(&k, &grid, &[1.0, 3.0]).unwrap().sample(StreamKey::root(5));
    assert_eq!(one[0].values, two[0].values);
    let again = MartingaleSampler::new(&k, &grid, &[1.0, 3.0]).unwrap().sample(StreamKey::root(5));
    assert_eq!(two[1].values, again[1].values);
    let other = MartingaleSampler::new(&k, &grid, &[1.0]).unwrap().sample(StreamKey::root(6));
    assert_ne!(one[0].values, other[0].values);
    assert!(MartingaleSampler::new(&k, &grid, &[2.0, 1.0]).is_err());
}

#[test]
fn decomposition_parts_sum_to_convolution_covariance() {
    let (k, m, cert) = certificate();
    let a = cert.a_const;
    let grid = GridSpec::new(1, 1024, 128.0).unwrap();
    let eps = a * (-2.0f64).exp();
    let t = t_eps(a, eps);
    assert!((t - 2.0).abs() < 1e-12);
    let lattice = |f| LatticeSpectrum::new(&grid, &f).unwrap();
    let conv = lattice(spectrum_conv(&k, &m, a, t).unwrap());
    let x = lattice(spectrum_kt(&k, t).unwrap());
    let w = lattice(spectrum_w_t(&k, &m, a, t).unwrap());
    let z = lattice(spectrum_z_t(&k, &m, a, t).unwrap());
    for lag in [0usize, 3, 10, 40] {
        let parts = x.covariance(lag) + w.covariance(lag) + z.covariance(lag);
        assert!((parts - conv.covariance(lag)).abs() < 1e-9, "lag {lag}");
    }
}

#[test]
fn decomposed_sample_matches_convolution_oracle() {
    let (k, m, cert) = certificate();
    let a = cert.a_const;
    let eps = a / 8.0;
    let grid = GridSpec::new(1, 8192, 128.0).unwrap();
    let sampler = DecomposedSampler::new(&k, &m, &cert, eps, &grid).unwrap();

    // ∫ K̂(ω) |ρ̂(εω)|² cos(ωh) dω with K̂ = 1/(2 max(1, |ω|))
    let oracle = |h: f64| {
        let f = |w: f64| m.hat_radial(eps * w).powi(2) * (w * h).cos();
        simpson(0.0, 1.0, 2000, f) + simpson(1.0, 400.0 / eps, 400_000, |w| f(w) / w)
    };
    let (vx, vw, vz) = sampler.variances();
    assert!((vx + vw + vz - oracle(0.0)).abs() < 2e-2, "{} vs {}", vx + vw + vz, oracle(0.0));

    let lag = 64;
    let h = lag as f64 * grid.spacing();
    let rows = replica_map(300, StreamKey::root(21), |_, key| {
        let s = sampler.sample(key);
        (s.sum.lagged_product(&s.sum, lag), s.w_t.lagged_product(&s.z_t, 0), s.x_t.lagged_product(&s.w_t, 0))
    });
    let cov = summary(rows.iter().map(|r| r.0).collect());
    assert!(cov.within(oracle(h), 4.0, 2e-2), "{} vs {}", cov.mean, oracle(h));
    let wz = summary(rows.iter().map(|r| r.1).collect());
    let xw = summary(rows.iter().map(|r| r.2).collect());
    assert!(wz.within(0.0, 4.0, 0.0));
    assert!(xw.within(0.0, 4.0, 0.0));
}

#[test]
fn z_variance_shrinks_with_eps() {
    let (k, m, cert) = certificate();
    let grid = GridSpec::new(1, 4096, 64.0).unwrap();
    let a = cert.a_const;
    let coarse = DecomposedSampler::new(&k, &m, &cert, a * 1e-1, &grid).unwrap();
    let fine = DecomposedSampler::new(&k, &m, &cert, a * 1e-3, &grid).unwrap();
    assert!(fine.variances().2 < coarse.variances().2);
    assert!(DecomposedSampler::new(&k, &m, &cert, a, &grid).is_err());
    assert!(DecomposedSampler::new(&k, &m, &cert, 0.0, &grid).is_err());
    let unit = DecomposedSampler::new(&k, &m, &cert, a * (-1.0f64).exp(), &grid).unwrap();
    assert!((unit.t() - 1.0).abs() < 1e-12);
}

#[test]
fn point_values_are_gaussian() {
    let k = SeedKernel::ball(2).unwrap();
    let grid = GridSpec::new(2, 16, 8.0).unwrap();
    let sampler = MartingaleSampler::new(&k, &grid, &[1.0]).unwrap();
    let n = 4000;
    let values = replica_map(n, StreamKey::root(3), |_, key| sampler.sample(key)[0].values[37]);
    let (skew, kurt) = skewness_kurtosis(&values);
    let nf = n as f64;
    assert!(skew.abs() < 4.0 * (6.0 / nf).sqrt(), "skew {skew}");
    assert!(kurt.abs() < 4.0 * (24.0 / nf).sqrt(), "kurt {kurt}");
    let s = summary(values.iter().map(|v| v * v).collect());
    assert!(s.within(sampler.variances()[0], 4.0, 0.0));
}
