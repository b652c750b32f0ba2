//! Run configuration: a TOML document with flat sections.
//!
//! ```toml
//! seed = 42                 # master seed (default 0)
//! out = "runs/demo"         # output directory (default "chaoscope-out")
//! suites = ["decomp", "laplace"]
//!
//! [kernel]
//! kind = "ball"             # or "table", which also needs `path`
//!
//! [mollifier]
//! kind = "standard"
//! order = 1                 # default ⌈d/2⌉, needs 2·order ≥ d
//!
//! [grid]
//! points_per_side = 256
//! side_length = 16.0
//!
//! [regime]
//! d = 2
//! gamma = 3.0
//! t_grid = [0, 1, 2, 4, 8, 16]
//! eps_grid = [0.125, 0.0625]   # default a·2^-j, j = 1..=3
//! a = "auto"                   # or a number in (0, 1)
//!
//! [sampler]
//! replicas = 1000
//! z_min = 1e-4
//! compensate = true
//! q = 0.25                  # fractional moment order, default α/4
//! top_fraction = 0.01
//! tail_samples = 100000
//! kahane_pairs = 50
//! lags = 8
//! ```
//!
//! Only `kernel.kind`, `regime.d` and `regime.gamma` are required.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// Verification suites in dependency order.
pub const SUITES: [&str; 6] = ["decomp", "spectrum", "laplace", "moments", "tails", "kahane"];

/// Shorthand accepted in `suites` for every atomic-limit suite.
pub const ATOMIC_ALIAS: &str = "atomic";
const ATOMIC_SUITES: [&str; 3] = ["laplace", "moments", "tails"];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Ball,
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MollifierSpec {
    pub kind: String,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub points_per_side: usize,
    pub side_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeConfig {
    pub d: usize,
    pub gamma: f64,
    pub t_grid: Vec<f64>,
    pub eps_grid: Option<Vec<f64>>,
    /// `None` means search for the constant.
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub replicas: usize,
    pub z_min: f64,
    pub compensate: bool,
    pub q: Option<f64>,
    pub top_fraction: f64,
    pub tail_samples: usize,
    pub kahane_pairs: usize,
    pub lags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub suites: Vec<String>,
    pub kernel: KernelSpec,
    pub mollifier: MollifierSpec,
    pub grid: GridConfig,
    pub regime: RegimeConfig,
    pub sampler: SamplerConfig,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form. The output directory is not part
    /// of it, so moving a run does not change its hash.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }

    /// Hash of the parts a decomposition certificate depends on.
    pub fn certificate_key(&self) -> String {
        let key = (&self.kernel, &self.mollifier, self.regime.d, &self.regime.t_grid, self.regime.a);
        hex(&Sha256::digest(serde_json::to_vec(&key).expect("serialisable")))
    }

    /// Selected suites in dependency order, with the alias expanded.
    pub fn ordered_suites(&self) -> Vec<&'static str> {
        let alias = self.suites.iter().any(|x| x == ATOMIC_ALIAS);
        SUITES
            .iter()
            .copied()
            .filter(|s| self.suites.iter().any(|x| x == s) || (alias && ATOMIC_SUITES.contains(s)))
            .collect()
    }

    /// Replace the suite selection, re-running the suite checks.
    pub fn with_suites(mut self, suites: Vec<String>) -> Result<Self, ConfigErrors> {
        let mut errors = Vec::new();
        check_suites(&suites, self.regime.d, self.regime.gamma, &mut errors);
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        self.suites = suites;
        Ok(self)
    }

    pub fn critical_gamma(&self) -> f64 {
        (2.0 * self.regime.d as f64).sqrt()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// All problems found in a config, one line each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid config ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Reads keys from one table, recording every violation.
struct Section<'a> {
    name: &'a str,
    table: Table,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        if self.name.is_empty() {
            k.to_string()
        } else {
            format!("{}.{k}", self.name)
        }
    }

    fn take(&mut self, k: &str) -> Option<Value> {
        self.table.remove(k)
    }

    fn error(&mut self, k: &str, msg: impl std::fmt::Display) {
        let key = self.key(k);
        self.errors.push(format!("{key}: {msg}"));
    }

    fn float(&mut self, k: &str) -> Option<f64> {
        match self.take(k)? {
            Value::Float(v) => Some(v),
            Value::Integer(v) => Some(v as f64),
            other => {
                self.error(k, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn int(&mut self, k: &str) -> Option<i64> {
        match self.take(k)? {
            Value::Integer(v) => Some(v),
            other => {
                self.error(k, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn count(&mut self, k: &str, default: usize, min: usize) -> usize {
        match self.int(k) {
            None => default,
            Some(v) if v >= min as i64 => v as usize,
            Some(v) => {
                self.error(k, format!("must be at least {min}, got {v}"));
                default
            }
        }
    }

    fn string(&mut self, k: &str) -> Option<String> {
        match self.take(k)? {
            Value::String(s) => Some(s),
            other => {
                self.error(k, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn boolean(&mut self, k: &str) -> Option<bool> {
        match self.take(k)? {
            Value::Boolean(b) => Some(b),
            other => {
                self.error(k, format!("expected a boolean, found {}", other.type_str()));
                None
            }
        }
    }

    fn floats(&mut self, k: &str) -> Option<Vec<f64>> {
        match self.take(k)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for v in items {
                    match v {
                        Value::Float(x) => out.push(x),
                        Value::Integer(x) => out.push(x as f64),
                        other => {
                            self.error(k, format!("expected numbers, found {}", other.type_str()));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.error(k, format!("expected an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn strings(&mut self, k: &str) -> Option<Vec<String>> {
        match self.take(k)? {
            Value::Array(items) => {
                let mut out = Vec::with_capacity(items.len());
                for v in items {
                    match v {
                        Value::String(s) => out.push(s),
                        other => {
                            self.error(k, format!("expected strings, found {}", other.type_str()));
                            return None;
                        }
                    }
                }
                Some(out)
            }
            other => {
                self.error(k, format!("expected an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn missing(&mut self, k: &str) {
        self.error(k, "missing required key");
    }

    fn finish(self) {
        let mut unknown: Vec<&String> = self.table.keys().collect();
        unknown.sort();
        for k in unknown {
            let key = if self.name.is_empty() {
                k.clone()
            } else {
                format!("{}.{k}", self.name)
            };
            self.errors.push(format!("{key}: unknown key"));
        }
    }
}

const SECTIONS: [&str; 5] = ["kernel", "mollifier", "grid", "regime", "sampler"];

/// Parse and validate a config. `base` resolves relative table paths.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let mut root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("syntax: {}", e.message())]))?;
    let mut errors = Vec::new();

    let mut tables = Vec::new();
    for name in SECTIONS {
        match root.remove(name) {
            Some(Value::Table(t)) => tables.push(t),
            Some(other) => {
                errors.push(format!("{name}: expected a section, found {}", other.type_str()));
                tables.push(Table::new());
            }
            None => tables.push(Table::new()),
        }
    }
    let mut tables = tables.into_iter();
    let (kernel_t, moll_t, grid_t, regime_t, sampler_t) = (
        tables.next().unwrap(),
        tables.next().unwrap(),
        tables.next().unwrap(),
        tables.next().unwrap(),
        tables.next().unwrap(),
    );

    // top level
    let mut top = Section { name: "", table: root, errors: &mut errors };
    let seed = match top.int("seed") {
        None => 0,
        Some(v) if v >= 0 => v as u64,
        Some(v) => {
            top.error("seed", format!("must be nonnegative, got {v}"));
            0
        }
    };
    let out = PathBuf::from(top.string("out").unwrap_or_else(|| "chaoscope-out".into()));
    let suites = top.strings("suites").unwrap_or_default();
    top.finish();

    // regime first: d feeds the defaults below
    let mut sec = Section { name: "regime", table: regime_t, errors: &mut errors };
    let d = match sec.int("d") {
        None => {
            sec.missing("d");
            None
        }
        Some(v) if (1..=3).contains(&v) => Some(v as usize),
        Some(v) => {
            sec.error("d", format!("must be 1, 2 or 3, got {v}"));
            None
        }
    };
    let gamma = match sec.float("gamma") {
        None => {
            sec.missing("gamma");
            None
        }
        Some(g) if g > 0.0 && g.is_finite() => Some(g),
        Some(g) => {
            sec.error("gamma", format!("must be positive, got {g}"));
            None
        }
    };
    let t_grid = sec.floats("t_grid").unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0]);
    if t_grid.is_empty()
        || t_grid.iter().any(|t| !(*t >= 0.0) || !t.is_finite())
        || t_grid.windows(2).any(|w| w[1] <= w[0])
    {
        sec.error("t_grid", "must be a nonempty increasing list of nonnegative times");
    }
    let a = match sec.take("a") {
        None => None,
        Some(Value::String(s)) if s == "auto" => None,
        Some(Value::Float(v)) if v > 0.0 && v < 1.0 => Some(v),
        Some(other) => {
            sec.error("a", format!("expected \"auto\" or a number in (0, 1), found {other}"));
            None
        }
    };
    let eps_grid = sec.floats("eps_grid");
    if let Some(eps) = &eps_grid {
        let upper = a.unwrap_or(1.0);
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < upper)) {
            sec.error("eps_grid", format!("entries must lie in (0, {upper})"));
        }
    }
    sec.finish();

    let mut sec = Section { name: "kernel", table: kernel_t, errors: &mut errors };
    let kernel = match sec.string("kind").as_deref() {
        Some("ball") => Some(KernelSpec::Ball),
        Some("table") => match sec.string("path") {
            Some(p) => Some(KernelSpec::Table { path: base.join(p) }),
            None => {
                sec.missing("path");
                None
            }
        },
        Some(other) => {
            sec.error("kind", format!("unknown kernel kind `{other}` (expected ball or table)"));
            None
        }
        None => {
            sec.missing("kind");
            None
        }
    };
    sec.finish();

    let mut sec = Section { name: "mollifier", table: moll_t, errors: &mut errors };
    let kind = sec.string("kind").unwrap_or_else(|| "standard".into());
    if kind != "standard" {
        sec.error("kind", format!("unknown mollifier kind `{kind}` (expected standard)"));
    }
    let default_order = d.map_or(1, |d| d.div_ceil(2));
    let order = sec.count("order", default_order, 1);
    if let Some(d) = d {
        if 2 * order < d {
            sec.error("order", format!("2·order must be at least d = {d}"));
        }
    }
    sec.finish();

    let mut sec = Section { name: "grid", table: grid_t, errors: &mut errors };
    let points_per_side = sec.count("points_per_side", 256, 8);
    if !points_per_side.is_power_of_two() {
        sec.error("points_per_side", format!("must be a power of two, got {points_per_side}"));
    }
    let side_length = sec.float("side_length").unwrap_or(16.0);
    if !(side_length > 0.0 && side_length.is_finite()) {
        sec.error("side_length", "must be positive");
    }
    sec.finish();

    let mut sec = Section { name: "sampler", table: sampler_t, errors: &mut errors };
    let replicas = sec.count("replicas", 1000, 100);
    let z_min = sec.float("z_min").unwrap_or(1e-4);
    if !(z_min > 0.0 && z_min.is_finite()) {
        sec.error("z_min", "must be positive");
    }
    let compensate = sec.boolean("compensate").unwrap_or(true);
    let q = sec.float("q");
    if let Some(q) = q {
        if !(q > 0.0) {
            sec.error("q", "must be positive");
        }
    }
    let top_fraction = sec.float("top_fraction").unwrap_or(0.01);
    if !(top_fraction > 0.0 && top_fraction <= 0.05) {
        sec.error("top_fraction", "must lie in (0, 0.05]");
    }
    let tail_samples = sec.count("tail_samples", 100_000, 1000);
    let kahane_pairs = sec.count("kahane_pairs", 50, 1);
    let lags = sec.count("lags", 8, 1);
    sec.finish();

    match (d, gamma) {
        (Some(d), Some(g)) => check_suites(&suites, d, g, &mut errors),
        _ => check_suites(&suites, 1, f64::INFINITY, &mut errors),
    }
    if let (Some(d), Some(g)) = (d, gamma) {
        let gc = (2.0 * d as f64).sqrt();
        if let Some(q) = q {
            if g > gc && q >= gc / g {
                errors.push(format!("sampler.q: must be below α = √(2d)/γ = {:.6}", gc / g));
            }
        }
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(RunConfig {
        seed,
        out,
        suites,
        kernel: kernel.expect("checked"),
        mollifier: MollifierSpec { kind, order },
        grid: GridConfig { points_per_side, side_length },
        regime: RegimeConfig {
            d: d.expect("checked"),
            gamma: gamma.expect("checked"),
            t_grid,
            eps_grid,
            a,
        },
        sampler: SamplerConfig {
            replicas,
            z_min,
            compensate,
            q,
            top_fraction,
            tail_samples,
            kahane_pairs,
            lags,
        },
    })
}

/// Unknown suite names, and the `γ > √(2d)` guard for atomic-limit suites.
fn check_suites(suites: &[String], d: usize, gamma: f64, errors: &mut Vec<String>) {
    for s in suites {
        if !SUITES.contains(&s.as_str()) && s != ATOMIC_ALIAS {
            errors.push(format!(
                "suites: unknown suite `{s}` (expected one of {}, {ATOMIC_ALIAS})",
                SUITES.join(", ")
            ));
        }
    }
    let gc = (2.0 * d as f64).sqrt();
    let needs: Vec<&str> = suites
        .iter()
        .map(String::as_str)
        .filter(|s| ATOMIC_SUITES.contains(s) || *s == ATOMIC_ALIAS)
        .collect();
    if gamma <= gc && !needs.is_empty() {
        errors.push(format!(
            "regime.gamma: γ = {gamma} must exceed √(2d) = {gc:.6} for suite(s) {}",
            needs.join(", ")
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[kernel]\nkind = \"ball\"\n[regime]\nd = 2\ngamma = 3.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.kernel, KernelSpec::Ball);
        assert_eq!(c.regime.a, None);
        assert_eq!(c.mollifier.order, 1);
        assert_eq!(c.regime.t_grid, vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0]);
        assert!(c.suites.is_empty());
        assert_eq!(c.hash(), parse_config(MINIMAL, Path::new("/elsewhere")).unwrap().hash());
    }

    #[test]
    fn subcritical_gamma_rejected_for_atomic_suites() {
        let text = "suites = [\"laplace\"]\n[kernel]\nkind = \"ball\"\n[regime]\nd = 2\ngamma = 1.5\n";
        let e = parse_config(text, Path::new(".")).unwrap_err();
        assert_eq!(e.0.len(), 1);
        assert!(e.0[0].contains("√(2d)"), "{e}");
        let ok = text.replace("laplace", "decomp");
        let c = parse_config(&ok, Path::new(".")).unwrap();
        assert!(c.with_suites(vec!["atomic".into()]).is_err());
        let alias = text.replace("laplace", "atomic");
        assert_eq!(parse_config(&alias, Path::new(".")).unwrap_err().0.len(), 1);
    }

    #[test]
    fn every_violation_is_reported() {
        let text = "colour = 1\n[kernel]\n[regime]\nd = 5\ngamma = 3.0\n[sampler]\nreplicas = 10\n";
        let e = parse_config(text, Path::new(".")).unwrap_err();
        let joined = e.0.join("\n");
        assert!(joined.contains("colour: unknown key"));
        assert!(joined.contains("kernel.kind: missing required key"));
        assert!(joined.contains("regime.d: must be 1, 2 or 3"));
        assert!(joined.contains("sampler.replicas: must be at least 100"));
        assert_eq!(e.0.len(), 4, "{joined}");
    }

    #[test]
    fn suites_are_ordered_by_dependency() {
        let text = format!("suites = [\"kahane\", \"spectrum\", \"decomp\"]\n{MINIMAL}");
        let c = parse_config(&text, Path::new(".")).unwrap();
        assert_eq!(c.ordered_suites(), vec!["decomp", "spectrum", "kahane"]);
        let c = c.with_suites(vec!["kahane".into(), "atomic".into()]).unwrap();
        assert_eq!(c.ordered_suites(), vec!["laplace", "moments", "tails", "kahane"]);
        let other = format!("seed = 1\n{text}");
        assert_ne!(parse_config(&other, Path::new(".")).unwrap().hash(), c.hash());
    }
}
