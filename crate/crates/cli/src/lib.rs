//! Command-line driver: config parsing, suite orchestration and artifacts.
//!
//! Output layout under `--out`:
//!
//! * `decomposition/certificate.json`, `decomposition/identity_t=<t>.csv`
//! * `fields/*.bin`, `measures/*.bin`: one-line JSON header then little-endian f64
//! * `atomic/atoms.csv` with `atomic/atoms.meta.json`
//! * `verify/<suite>.json`, `verify/<suite>.csv`, `failures.json`
//! * `cache/<key>/certificate.json`

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod suites;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chaoscope::atomic::{sample_atomic, write_atoms, Intensity};
use chaoscope::fields::{DecomposedSampler, MartingaleSampler};
use chaoscope::gmc::{chaos_measure, derivative_measure, supercritical_norm, NormMode, DEFAULT_LOG_CAP};
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{parse_config, RunConfig};
use crate::report::{failures, read_json, summary_table, write_csv, write_json, SuiteReport};
use crate::suites::Run;

/// Exit status when every check passed.
pub const EXIT_OK: i32 = 0;
/// Exit status when a check failed.
pub const EXIT_FAILED: i32 = 1;
/// Exit status for invalid input or runtime errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chaoscope", version, about = "Gaussian multiplicative chaos toolkit")]
pub struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long, global = true, env = "CHAOSCOPE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify the decomposition constant and write the identity tables
    Decompose,
    /// Sample Gaussian fields and write snapshots
    SimulateField {
        #[arg(long, value_enum, default_value_t = FieldChoice::Martingale)]
        kind: FieldChoice,
    },
    /// Build chaos measures from martingale fields at the positive t-grid times
    Measure {
        #[arg(long, value_enum)]
        regime: RegimeChoice,
    },
    /// Sample the atomic limit measure
    SampleAtomic {
        #[arg(long, value_enum, default_value_t = IntensityChoice::Lebesgue)]
        intensity: IntensityChoice,
    },
    /// Run verification suites (the config's list when none is given)
    Verify {
        #[arg(long, value_parser = suite_names())]
        suite: Vec<String>,
    },
    /// Summarise the reports of an earlier verify run
    Report,
}

fn suite_names() -> clap::builder::PossibleValuesParser {
    let mut names = config::SUITES.to_vec();
    names.push(config::ATOMIC_ALIAS);
    clap::builder::PossibleValuesParser::new(names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldChoice {
    Martingale,
    Decomposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeChoice {
    Sub,
    Critical,
    Super,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntensityChoice {
    /// Lebesgue measure on the unit cube
    Lebesgue,
    /// Derivative measure at the largest t-grid time the grid resolves
    Critical,
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

/// Read a config file, applying the `--seed` and `--out` overrides.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cfg = parse_config(&text, base).map_err(anyhow::Error::new)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o.to_path_buf();
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: Cli) -> Result<i32> {
    if let Command::Report = cli.command {
        let out = match (&cli.out, &cli.config) {
            (Some(o), _) => o.clone(),
            (None, Some(c)) => load_config(c, cli.seed, None)?.out,
            (None, None) => PathBuf::from("chaoscope-out"),
        };
        return report(&out);
    }
    let Some(path) = &cli.config else {
        bail!("--config is required for this command");
    };
    let cfg = load_config(path, cli.seed, cli.out.as_deref())?;
    match cli.command {
        Command::Verify { suite } => {
            let cfg = if suite.is_empty() { cfg } else { cfg.with_suites(suite).map_err(anyhow::Error::new)? };
            verify(cfg)
        }
        Command::Decompose => decompose(&Run::new(cfg)?),
        Command::SimulateField { kind } => simulate_field(&Run::new(cfg)?, kind),
        Command::Measure { regime } => measure(&Run::new(cfg)?, regime),
        Command::SampleAtomic { intensity } => sample_atomic_cmd(&Run::new(cfg)?, intensity),
        Command::Report => unreachable!("handled above"),
    }
}

/// Run the configured suites in dependency order and write their reports.
pub fn verify(cfg: RunConfig) -> Result<i32> {
    let suites = cfg.ordered_suites();
    if suites.is_empty() {
        println!("no suites selected");
        return Ok(EXIT_OK);
    }
    let run = Run::new(cfg)?;
    let dir = run.out.join("verify");
    let mut reports = Vec::new();
    for name in suites {
        match run.suite(name) {
            Ok((report, table)) => {
                write_json(&dir.join(format!("{name}.json")), &report)?;
                write_csv(&dir.join(format!("{name}.csv")), &run.hash, run.seed(), &table.header, &table.rows)?;
                reports.push(report);
            }
            Err(e) => {
                // an aborted suite is a failed check, not an aborted run
                let check = report::Check::holds("completed", false, format!("{e:#}"));
                let report = SuiteReport::new(name, &run.hash, run.seed(), vec![check], serde_json::Value::Null);
                write_json(&dir.join(format!("{name}.json")), &report)?;
                reports.push(report);
            }
        }
    }
    print!("{}", summary_table(&reports));
    finish(&run.out, &run.hash, run.seed(), &reports)
}

/// Write or clear `failures.json` and pick the exit status.
fn finish(out: &Path, hash: &str, seed: u64, reports: &[SuiteReport]) -> Result<i32> {
    let failed = failures(reports);
    let path = out.join("failures.json");
    if failed.is_empty() {
        if path.exists() {
            std::fs::remove_file(&path)?;
        }
        return Ok(EXIT_OK);
    }
    let doc = serde_json::json!({ "config_hash": hash, "seed": seed, "failures": failed });
    write_json(&path, &doc)?;
    eprintln!("{} check(s) failed; see {}", failed.len(), path.display());
    Ok(EXIT_FAILED)
}

fn report(out: &Path) -> Result<i32> {
    let dir = out.join("verify");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    if paths.is_empty() {
        bail!("no reports in {}", dir.display());
    }
    // dependency order, then anything else by name
    paths.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let rank = config::SUITES.iter().position(|s| *s == stem).unwrap_or(usize::MAX);
        (rank, stem)
    });
    let reports = paths.iter().map(|p| read_json::<SuiteReport>(p)).collect::<Result<Vec<_>>>()?;
    print!("{}", summary_table(&reports));
    let passed = reports.iter().all(|r| r.passed);
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

fn decompose(run: &Run) -> Result<i32> {
    let cert = run.write_decomposition()?;
    println!(
        "a = {}  valid = {}  max identity residual = {:.3e}  min K_W = {:.3e}  min K_Z = {:.3e}",
        cert.a_const, cert.valid, cert.identity_residual, cert.min_kw, cert.min_kz
    );
    Ok(if cert.valid { EXIT_OK } else { EXIT_FAILED })
}

fn simulate_field(run: &Run, kind: FieldChoice) -> Result<i32> {
    let grid = run.grid()?;
    let dir = run.out.join("fields");
    match kind {
        FieldChoice::Martingale => {
            let times = run.sample_times();
            if times.is_empty() {
                bail!("the t-grid has no positive times");
            }
            run.warn_unresolved(&times);
            let path = MartingaleSampler::new(&run.kernel, &grid, &times)?.sample(run.key("simulate-field"));
            for f in &path {
                let t = f.meta.t.expect("martingale layers carry t");
                let file = dir.join(format!("martingale_t={t}.bin"));
                run.write_field(&file, f)?;
                println!("{}  variance {:.6}", file.display(), f.meta.lattice_variance);
            }
        }
        FieldChoice::Decomposed => {
            let cert = run.valid_certificate()?;
            for (i, eps) in run.eps_grid()?.into_iter().enumerate() {
                let sampler = DecomposedSampler::new(&run.kernel, &run.mollifier, cert, eps, &grid)?;
                let s = sampler.sample(run.key("simulate-field").child(i as u64));
                for (part, f) in [("x", &s.x_t), ("w", &s.w_t), ("z", &s.z_t), ("sum", &s.sum)] {
                    let file = dir.join(format!("decomposed_eps={eps}_{part}.bin"));
                    run.write_field(&file, f)?;
                }
                println!("eps = {eps}: t = {:.6}, variance {:.6}", sampler.t(), s.sum.meta.lattice_variance);
            }
        }
    }
    Ok(EXIT_OK)
}

fn measure(run: &Run, regime: RegimeChoice) -> Result<i32> {
    let (d, gamma) = (run.cfg.regime.d, run.cfg.regime.gamma);
    let gc = run.cfg.critical_gamma();
    match regime {
        RegimeChoice::Sub if gamma >= gc => bail!("sub needs γ < √(2d) = {gc:.6}, got {gamma}"),
        RegimeChoice::Super if gamma <= gc => bail!("super needs γ > √(2d) = {gc:.6}, got {gamma}"),
        _ => {}
    }
    let times = run.sample_times();
    if times.is_empty() {
        bail!("the t-grid has no positive times");
    }
    run.warn_unresolved(&times);
    let grid = run.grid()?;
    let sampler = MartingaleSampler::new(&run.kernel, &grid, &times)?;
    let variances = sampler.variances();
    let path = sampler.sample(run.key("measure"));
    let dir = run.out.join("measures");
    let label = match regime {
        RegimeChoice::Sub => "sub",
        RegimeChoice::Critical => "critical",
        RegimeChoice::Super => "super",
    };
    for ((field, &t), &v) in path.iter().zip(&times).zip(&variances) {
        let m = match regime {
            RegimeChoice::Sub => chaos_measure(field, gamma, v, 1.0, DEFAULT_LOG_CAP)?,
            RegimeChoice::Critical => derivative_measure(field, t, DEFAULT_LOG_CAP)?,
            RegimeChoice::Super => {
                let norm = supercritical_norm(d, gamma, NormMode::T(t))?;
                chaos_measure(field, gamma, v, norm, DEFAULT_LOG_CAP)?
            }
        };
        let file = dir.join(format!("{label}_t={t}.bin"));
        run.write_measure(&file, &m)?;
        println!(
            "{}  total mass {:.6e}  overflow {}",
            file.display(),
            m.total_mass(),
            m.meta.overflow_count
        );
    }
    Ok(EXIT_OK)
}

fn sample_atomic_cmd(run: &Run, intensity: IntensityChoice) -> Result<i32> {
    let (d, gamma) = (run.cfg.regime.d, run.cfg.regime.gamma);
    let gc = run.cfg.critical_gamma();
    if gamma <= gc {
        bail!("atomic sampling needs γ > √(2d) = {gc:.6}, got {gamma}");
    }
    let nu = match intensity {
        IntensityChoice::Lebesgue => Intensity::lebesgue(vec![0.0; d], vec![1.0; d])?,
        IntensityChoice::Critical => {
            let times = run.sample_times();
            let limit = run.resolved_time();
            let t = times
                .iter()
                .rev()
                .find(|t| **t <= limit)
                .or(times.first())
                .copied()
                .context("the t-grid has no positive times")?;
            run.warn_unresolved(&[t]);
            let grid = run.grid()?;
            let field = MartingaleSampler::new(&run.kernel, &grid, &[t])?
                .sample(run.key("sample-atomic").tagged("field"))
                .pop()
                .expect("one layer");
            Intensity::from_grid(derivative_measure(&field, t, DEFAULT_LOG_CAP)?)?
        }
    };
    let s = &run.cfg.sampler;
    let mut m = sample_atomic(&nu, gamma, s.z_min, s.compensate, run.key("sample-atomic").tagged("atoms"))?;
    m.meta.config_hash = Some(run.hash.clone());
    m.meta.master_seed = Some(run.seed());
    let dir = run.out.join("atomic");
    std::fs::create_dir_all(&dir)?;
    let file = dir.join("atoms.csv");
    write_atoms(&file, &m)?;
    println!(
        "{}  {} atoms  total mass {:.6e}  compensator {:.3e}",
        file.display(),
        m.atoms.len(),
        m.total_mass(),
        m.meta.compensator_mass
    );
    Ok(EXIT_OK)
}
