use chaoscope::fields::{sample_martingale_path, GridSpec, MartingaleSampler};
use chaoscope::gmc::{
    apply_diagonal_tilt, chaos_measure, derivative_measure, supercritical_norm, NormMode, Regime,
    DEFAULT_LOG_CAP,
};
use chaoscope::kernels::SeedKernel;
use chaoscope::rng::StreamKey;
use chaoscope::snapshot::{read_field, read_measure, read_snapshot, write_field, write_measure};
use chaoscope::stats::{median, replica_map, EnsembleSummary};
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn subcritical_mass_has_unit_density() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 256, 16.0).unwrap();
    let sampler = MartingaleSampler::new(&k, &grid, &[2.0]).unwrap();
    let masses = replica_map(400, StreamKey::root(1), |_, key| {
        let f = sampler.sample(key).pop().unwrap();
        let v = f.meta.lattice_variance;
        chaos_measure(&f, 1.0, v, 1.0, DEFAULT_LOG_CAP).unwrap().total_mass()
    });
    let s = EnsembleSummary::from_values(masses, 0).unwrap();
    assert!(s.within(16.0, 4.0, 0.0), "{} ± {}", s.mean, s.se);
}

#[test]
fn chaos_weights_follow_lognormal_law() {
    let k = SeedKernel::ball(2).unwrap();
    let grid = GridSpec::new(2, 16, 4.0).unwrap();
    let sampler = MartingaleSampler::new(&k, &grid, &[1.0]).unwrap();
    let gamma = 0.8;
    let cell = grid.cell_volume();
    let rows = replica_map(3000, StreamKey::root(2), |_, key| {
        let f = sampler.sample(key).pop().unwrap();
        let m = chaos_measure(&f, gamma, f.meta.lattice_variance, 1.0, DEFAULT_LOG_CAP).unwrap();
        (m.weights[100] / cell).powi(2)
    });
    let v = sampler.variances()[0];
    let s = EnsembleSummary::from_values(rows, 0).unwrap();
    assert!(s.within((gamma * gamma * v).exp(), 4.0, 0.0), "{} vs {}", s.mean, (gamma * gamma * v).exp());
}

#[test]
fn supercritical_mass_collapses_without_renormalisation() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 1024, 32.0).unwrap();
    let ts = [1.0, 2.0, 4.0];
    let sampler = MartingaleSampler::new(&k, &grid, &ts).unwrap();
    let gamma = 2.5;
    let rows = replica_map(120, StreamKey::root(3), |_, key| {
        sampler
            .sample(key)
            .iter()
            .map(|f| {
                let m = chaos_measure(f, gamma, f.meta.lattice_variance, 1.0, DEFAULT_LOG_CAP).unwrap();
                assert_eq!(m.meta.regime, Regime::SuperT);
                m.total_mass()
            })
            .collect::<Vec<f64>>()
    });
    let medians: Vec<f64> = (0..ts.len())
        .map(|i| median(&rows.iter().map(|r| r[i]).collect::<Vec<_>>()))
        .collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn supercritical_norm_grows_with_depth() {
    let a = supercritical_norm(1, 2.5, NormMode::T(2.0)).unwrap();
    let b = supercritical_norm(1, 2.5, NormMode::T(4.0)).unwrap();
    assert!(b > a);
    // t^{3γ/(2√2)} e^{t(γ/√2 − 1)²}
    let expect = 2f64.powf(3.0 * 2.5 / (2.0 * 2f64.sqrt())) * (2.0 * (2.5 / 2f64.sqrt() - 1.0).powi(2)).exp();
    assert!((a / expect - 1.0).abs() < 1e-12);
    let e = supercritical_norm(1, 2.5, NormMode::Eps(0.01)).unwrap();
    let l = 100f64.ln();
    let expect = l.powf(3.0 * 2.5 / (2.0 * 2f64.sqrt())) * (l * (2.5 / 2f64.sqrt() - 1.0).powi(2)).exp();
    assert!((e / expect - 1.0).abs() < 1e-12);
    assert!(supercritical_norm(1, 2.5, NormMode::Eps(1.5)).is_err());
}

#[test]
fn derivative_truncation_matches_gaussian_tail() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 1024, 64.0).unwrap();
    let ts = [0.25, 1.0, 2.0];
    let sampler = MartingaleSampler::new(&k, &grid, &ts).unwrap();
    let variances = sampler.variances();
    let rows = replica_map(200, StreamKey::root(4), |_, key| {
        sampler
            .sample(key)
            .iter()
            .zip(ts)
            .map(|(f, t)| derivative_measure(f, t, DEFAULT_LOG_CAP).unwrap().meta.truncated_fraction.unwrap())
            .collect::<Vec<f64>>()
    });
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for (i, &t) in ts.iter().enumerate() {
        let mean = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
        let oracle = normal.sf(2f64.sqrt() * t / variances[i].sqrt());
        assert!((mean - oracle).abs() < 0.02, "t = {t}: {mean} vs {oracle}");
        assert!(mean < prev);
        prev = mean;
    }
}

#[test]
fn derivative_measure_requires_martingale() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 64, 8.0).unwrap();
    let mut f = sample_martingale_path(&k, &grid, &[1.0], StreamKey::root(5)).unwrap().pop().unwrap();
    let m = derivative_measure(&f, 1.0, DEFAULT_LOG_CAP).unwrap();
    assert_eq!(m.meta.regime, Regime::CriticalDerivative);
    assert!(m.weights.iter().all(|w| *w >= 0.0));

    // constant exponent on the diagonal
    let tilted = apply_diagonal_tilt(&m, 1.0, &|_| 0.5).unwrap();
    let c = 1.0 - 0.5f64.sqrt();
    assert_eq!(tilted.meta.tilt_exponent, Some(c));
    assert!((tilted.total_mass() - m.total_mass() * (0.5 * c).exp()).abs() < 1e-10 * m.total_mass());

    let sub = chaos_measure(&f, 1.0, 1.0, 1.0, DEFAULT_LOG_CAP).unwrap();
    assert!(apply_diagonal_tilt(&sub, 1.0, &|_| 0.0).is_err());
    f.meta.kind = chaoscope::fields::FieldKind::Stationary;
    assert!(derivative_measure(&f, 1.0, DEFAULT_LOG_CAP).is_err());
}

#[test]
fn log_cap_counts_overflow() {
    let k = SeedKernel::ball(1).unwrap();
    let grid = GridSpec::new(1, 64, 8.0).unwrap();
    let f = sample_martingale_path(&k, &grid, &[1.0], StreamKey::root(6)).unwrap().pop().unwrap();
    let m = chaos_measure(&f, 1e4, 0.0, 1.0, 5.0).unwrap();
    assert!(m.overflowed());
    assert!(m.meta.overflow_count > 0);
    assert!(m.weights.iter().all(|w| w.is_finite() && *w <= 5f64.exp()));
    assert!(chaos_measure(&f, 1.0, 1.0, 0.0, DEFAULT_LOG_CAP).is_err());
}

#[test]
fn box_mass_and_top_fraction() {
    let k = SeedKernel::ball(2).unwrap();
    let grid = GridSpec::new(2, 32, 4.0).unwrap();
    let f = sample_martingale_path(&k, &grid, &[1.0], StreamKey::root(7)).unwrap().pop().unwrap();
    let m = chaos_measure(&f, 1.0, f.meta.lattice_variance, 1.0, DEFAULT_LOG_CAP).unwrap();
    let total = m.total_mass();
    let whole = m.mass_in_box(&[0.0, 0.0], &[4.0, 4.0]);
    assert!((whole - total).abs() < 1e-12 * total);
    let halves = m.mass_in_box(&[0.0, 0.0], &[2.0, 4.0]) + m.mass_in_box(&[2.0, 0.0], &[4.0, 4.0]);
    assert!((halves - total).abs() < 1e-9 * total);
    assert!((m.top_fraction(grid.len()) - 1.0).abs() < 1e-12);
    assert!(m.top_fraction(10) > 10.0 / grid.len() as f64);
}

#[test]
fn snapshots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let k = SeedKernel::ball(2).unwrap();
    let grid = GridSpec::new(2, 16, 4.0).unwrap();
    let f = sample_martingale_path(&k, &grid, &[1.0], StreamKey::root(8)).unwrap().pop().unwrap();
    let fp = dir.path().join("field.bin");
    write_field(&fp, &f, Some("hash")).unwrap();
    let back = read_field(&fp).unwrap();
    assert_eq!(back.values, f.values);
    assert_eq!(back.grid, f.grid);
    let (header, _) = read_snapshot(&fp).unwrap();
    assert_eq!(header.config_hash.as_deref(), Some("hash"));
    assert_eq!(header.seed, f.meta.rng_seed);

    let m = chaos_measure(&f, 1.0, f.meta.lattice_variance, 1.0, DEFAULT_LOG_CAP).unwrap();
    let mp = dir.path().join("measure.bin");
    write_measure(&mp, &m, None).unwrap();
    assert_eq!(read_measure(&mp).unwrap().weights, m.weights);
    assert!(read_field(&mp).is_err());

    let bytes = std::fs::read(&fp).unwrap();
    std::fs::write(&fp, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_field(&fp).is_err());
}
