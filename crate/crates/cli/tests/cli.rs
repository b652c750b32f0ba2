use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chaoscope::atomic::read_atoms;
use chaoscope::snapshot::{read_field, read_measure, read_snapshot};
use chaoscope_cli::config::parse_config;
use serde_json::Value;
use statrs::function::gamma::gamma;

const MINIMAL: &str = "[kernel]\nkind = \"ball\"\n[regime]\nd = 2\ngamma = 3.0\n";

/// Small grid and replica counts so the debug build stays quick.
const SMALL: &str = r#"
seed = 11
suites = ["decomp", "spectrum", "laplace", "moments", "tails", "kahane"]
[kernel]
kind = "ball"
[grid]
points_per_side = 16
side_length = 4.0
[regime]
d = 1
gamma = 2.5
t_grid = [0, 1, 2]
[sampler]
replicas = 100
z_min = 1e-3
tail_samples = 20000
top_fraction = 0.05
kahane_pairs = 3
lags = 2
"#;

fn chaoscope(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaoscope"))
        .args(args)
        .current_dir(dir)
        .env_remove("CHAOSCOPE_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Every file under `root`, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn minimal_config_parses_with_auto_constant() {
    let c = parse_config(MINIMAL, Path::new(".")).unwrap();
    assert_eq!(c.regime.d, 2);
    assert_eq!(c.regime.gamma, 3.0);
    assert_eq!(c.regime.a, None);
    assert_eq!(c.hash().len(), 64);
}

#[test]
fn atomic_suite_below_threshold_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "suites = [\"atomic\"]\n[kernel]\nkind = \"ball\"\n[regime]\nd = 2\ngamma = 1.5\n",
    );
    let o = chaoscope(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("√(2d) = 2"), "{}", stderr(&o));
    assert!(!dir.path().join("chaoscope-out").exists());
}

#[test]
fn all_violations_are_reported() {
    let text = "suites = [\"laplace\"]\nextra = true\n[kernel]\n[regime]\nd = 2\ngamma = 1.5\n[grid]\npoints_per_side = 100\n";
    let e = parse_config(text, Path::new(".")).unwrap_err();
    let all = e.0.join("\n");
    for needle in [
        "extra: unknown key",
        "kernel.kind: missing required key",
        "grid.points_per_side: must be a power of two",
        "regime.gamma",
    ] {
        assert!(all.contains(needle), "missing `{needle}` in\n{all}");
    }
    assert_eq!(e.0.len(), 4);
    let missing = parse_config("[kernel]\nkind = \"ball\"\n", Path::new(".")).unwrap_err();
    assert_eq!(missing.0, vec!["regime.d: missing required key", "regime.gamma: missing required key"]);
}

#[test]
fn empty_suite_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("suites = []\nout = \"run\"\n{MINIMAL}"));
    let o = chaoscope(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn decomp_on_defaults_certifies_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("suites = [\"decomp\"]\n{MINIMAL}"));
    let o = chaoscope(&["verify", "--config", cfg.to_str().unwrap(), "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("1/1 suites passed"), "{stdout}");

    let run = dir.path().join("run");
    let cert = json(&run.join("decomposition/certificate.json"));
    for key in ["a_const", "t_grid", "identity_residual", "min_KW", "min_KZ", "scan_spec", "config_hash", "seed"] {
        assert!(cert.get(key).is_some(), "certificate lacks {key}");
    }
    let t_grid = cert["t_grid"].as_array().unwrap();
    let residuals = cert["identity_residual"].as_array().unwrap();
    assert_eq!(t_grid.len(), 6);
    assert_eq!(residuals.len(), 6);
    assert!(residuals.iter().all(|r| r.as_f64().unwrap() <= 1e-10));
    assert_eq!(cert["a_const"].as_f64(), Some(0.5));

    for t in ["0", "1", "2", "4", "8", "16"] {
        let csv = std::fs::read_to_string(run.join(format!("decomposition/identity_t={t}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# config_hash="));
        assert_eq!(lines.next().unwrap(), "omega,K_W,K_W_t,K_Z_t,Delta,residual");
        for line in lines {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert!((v[4] - v[2] - v[3]).abs() <= 1e-10);
        }
    }
    let report = json(&run.join("verify/decomp.json"));
    assert_eq!(report["passed"], Value::Bool(true));
    assert_eq!(report["config_hash"], cert["config_hash"]);
    assert!(!run.join("failures.json").exists());
}

#[test]
fn laplace_on_defaults_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", MINIMAL);
    let o = chaoscope(&["verify", "--suite", "laplace", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(&dir.path().join("chaoscope-out/verify/laplace.json"));
    let c = &report["data"]["constant_phi"];
    // E exp(−M[0,1]²) = exp(−Γ(1−α)/α), α = 2/3
    let a = 2.0 / 3.0;
    let oracle = (-gamma(1.0 - a) / a).exp();
    let closed = c["closed_form"].as_f64().unwrap();
    assert!((closed - oracle).abs() < 1e-12, "{closed} vs {oracle}");
    let (mean, se, bias) = (c["mean"].as_f64().unwrap(), c["se"].as_f64().unwrap(), c["bias_bound"].as_f64().unwrap());
    assert!((mean - oracle).abs() <= 3.0 * se + bias);
    assert!(se > 0.0 && se < 0.02);
    let rows = std::fs::read_to_string(dir.path().join("chaoscope-out/verify/laplace.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2 + 1000);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let cfg = cfg.to_str().unwrap();
    let a = chaoscope(&["verify", "--config", cfg, "--out", "a", "--threads", "1"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}\n{}", String::from_utf8_lossy(&a.stdout), stderr(&a));
    let b = Command::new(env!("CARGO_BIN_EXE_chaoscope"))
        .args(["verify", "--config", cfg, "--out", "b"])
        .current_dir(dir.path())
        .env("CHAOSCOPE_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(b.status.code(), Some(0));
    let (ta, tb) = (tree(&dir.path().join("a")), tree(&dir.path().join("b")));
    assert!(ta.len() > 10);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }

    // every report and CSV carries the hash and the seed
    let hash = json(&dir.path().join("a/verify/decomp.json"))["config_hash"].as_str().unwrap().to_string();
    for suite in ["decomp", "spectrum", "laplace", "moments", "tails", "kahane"] {
        let r = json(&dir.path().join(format!("a/verify/{suite}.json")));
        assert_eq!(r["config_hash"].as_str(), Some(hash.as_str()));
        assert_eq!(r["seed"].as_u64(), Some(11));
        let csv = std::fs::read_to_string(dir.path().join(format!("a/verify/{suite}.csv"))).unwrap();
        assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={hash} seed=11"));
    }

    // rerunning into a populated directory reuses the cache and changes nothing
    let again = chaoscope(&["verify", "--config", cfg, "--out", "a"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    let ta2 = tree(&dir.path().join("a"));
    assert_eq!(ta2.keys().collect::<Vec<_>>(), ta.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &ta2[k], "{} changed on rerun", k.display());
    }

    // a different seed changes the hash and the samples
    let c = chaoscope(&["verify", "--config", cfg, "--out", "c", "--seed", "12", "--suite", "tails"], dir.path());
    assert_eq!(c.status.code(), Some(0));
    let other = json(&dir.path().join("c/verify/tails.json"));
    assert_ne!(other["config_hash"].as_str(), Some(hash.as_str()));
    assert_ne!(
        std::fs::read(dir.path().join("c/verify/tails.csv")).unwrap()[90..],
        ta[Path::new("verify/tails.csv")][90..]
    );
}

/// Unit-variance spectral table `K̂(ω) = 3ω²/2` on `[0, 1]`, for which
/// `a = 1/2` is not admissible.
fn rising_kernel(dir: &Path) {
    let mut text = String::from("radius,hat\n");
    for i in 0..=200 {
        let w = i as f64 * 0.005;
        text.push_str(&format!("{w},{}\n", 1.5 * w * w));
    }
    write(dir, "rising.csv", &text);
}

#[test]
fn failing_checks_give_failure_list() {
    let dir = tempfile::tempdir().unwrap();
    rising_kernel(dir.path());
    let text = r#"
suites = ["decomp", "spectrum", "kahane"]
[kernel]
kind = "table"
path = "rising.csv"
[regime]
d = 1
gamma = 3.0
a = 0.5
t_grid = [0, 1]
[grid]
points_per_side = 16
side_length = 4.0
[sampler]
replicas = 100
kahane_pairs = 2
"#;
    let sub = dir.path().join("configs");
    std::fs::create_dir(&sub).unwrap();
    std::fs::rename(dir.path().join("rising.csv"), sub.join("rising.csv")).unwrap();
    let cfg = write(&sub, "c.toml", text);
    let o = chaoscope(&["verify", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let out = dir.path().join("chaoscope-out");
    let failures = json(&out.join("failures.json"));
    let list = failures["failures"].as_array().unwrap();
    let names: Vec<(&str, &str)> = list
        .iter()
        .map(|f| (f["suite"].as_str().unwrap(), f["check"].as_str().unwrap()))
        .collect();
    assert!(names.contains(&("decomp", "certificate_valid")), "{names:?}");
    assert!(names.contains(&("decomp", "min_KW")), "{names:?}");
    assert!(names.contains(&("spectrum", "completed")), "{names:?}");
    assert!(names.iter().all(|n| n.0 != "kahane"));
    assert!(failures["config_hash"].is_string());

    let r = chaoscope(&["report", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(r.status.code(), Some(1));
    let table = String::from_utf8_lossy(&r.stdout);
    assert!(table.contains("FAIL") && table.contains("1/3 suites passed"), "{table}");

    // the search finds a smaller admissible constant for the same kernel
    let auto = write(&sub, "auto.toml", &text.replace("a = 0.5", "a = \"auto\"").replace("\"spectrum\", \"kahane\"", ""));
    let o = chaoscope(&["verify", "--config", auto.to_str().unwrap(), "--out", "auto"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert = json(&dir.path().join("auto/decomposition/certificate.json"));
    assert!(cert["a_const"].as_f64().unwrap() < 0.5);
}

#[test]
fn table_without_unit_variance_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("radius,hat\n");
    for i in 0..=100 {
        text.push_str(&format!("{},0.25\n", i as f64 * 0.01));
    }
    write(dir.path(), "half.csv", &text);
    let cfg = write(dir.path(), "c.toml", "[kernel]\nkind = \"table\"\npath = \"half.csv\"\n[regime]\nd = 1\ngamma = 3.0\n");
    let o = chaoscope(&["decompose", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unit variance"), "{}", stderr(&o));
}

#[test]
fn sampling_commands_write_tagged_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    let cfg = cfg.to_str().unwrap();
    let run = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend(["--config", cfg, "--out", "run"]);
        chaoscope(&all, dir.path())
    };
    let out = dir.path().join("run");

    assert_eq!(run(&["simulate-field"]).status.code(), Some(0));
    let f = read_field(&out.join("fields/martingale_t=2.bin")).unwrap();
    assert_eq!(f.values.len(), 16);
    assert_eq!(f.meta.t, Some(2.0));
    let (header, _) = read_snapshot(&out.join("fields/martingale_t=1.bin")).unwrap();
    assert_eq!(header.master_seed, Some(11));
    let hash = header.config_hash.clone().unwrap();
    assert_eq!(hash.len(), 64);
    // header line, then 16 little-endian doubles
    let bytes = std::fs::read(out.join("fields/martingale_t=1.bin")).unwrap();
    let nl = bytes.iter().position(|b| *b == b'\n').unwrap();
    assert_eq!(bytes.len() - nl - 1, 16 * 8);
    let first = f64::from_le_bytes(bytes[nl + 1..nl + 9].try_into().unwrap());
    assert_eq!(first, read_field(&out.join("fields/martingale_t=1.bin")).unwrap().values[0]);

    assert_eq!(run(&["simulate-field", "--kind", "decomposed"]).status.code(), Some(0));
    let sum = read_field(&out.join("fields/decomposed_eps=0.25_sum.bin")).unwrap();
    let parts: Vec<_> = ["x", "w", "z"]
        .iter()
        .map(|p| read_field(&out.join(format!("fields/decomposed_eps=0.25_{p}.bin"))).unwrap())
        .collect();
    for i in 0..16 {
        let s: f64 = parts.iter().map(|p| p.values[i]).sum();
        assert!((s - sum.values[i]).abs() < 1e-12);
    }

    let sub = run(&["measure", "--regime", "sub"]);
    assert_eq!(sub.status.code(), Some(2), "γ = 2.5 exceeds √2");
    assert_eq!(run(&["measure", "--regime", "super"]).status.code(), Some(0));
    assert_eq!(run(&["measure", "--regime", "critical"]).status.code(), Some(0));
    let m = read_measure(&out.join("measures/critical_t=1.bin")).unwrap();
    assert!(m.weights.iter().all(|w| *w >= 0.0));
    let (mh, _) = read_snapshot(&out.join("measures/super_t=2.bin")).unwrap();
    assert_eq!(mh.config_hash.as_deref(), Some(hash.as_str()));

    for intensity in ["lebesgue", "critical"] {
        assert_eq!(run(&["sample-atomic", "--intensity", intensity]).status.code(), Some(0));
        let atoms = read_atoms(&out.join("atomic/atoms.csv")).unwrap();
        assert_eq!(atoms.meta.config_hash.as_deref(), Some(hash.as_str()));
        assert_eq!(atoms.meta.master_seed, Some(11));
        assert_eq!(atoms.meta.d, 1);
    }
    assert!(run(&["decompose"]).status.success());
    assert!(out.join("decomposition/certificate.json").exists());
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = chaoscope(&["verify"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
    let o = chaoscope(&["verify", "--suite", "bogus", "--config", "x.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = chaoscope(&["report", "--out", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = chaoscope(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["decompose", "simulate-field", "measure", "sample-atomic", "verify", "report"] {
        assert!(String::from_utf8_lossy(&o.stdout).contains(cmd));
    }
}
