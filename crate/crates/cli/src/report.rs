//! Suite reports and artifact writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One asserted comparison. `value` is checked against `threshold` in the
/// direction given by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
            detail: detail.into(),
        }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
            detail: detail.into(),
        }
    }

    /// A yes/no condition recorded as 1 or 0 against a threshold of 1.
    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0, detail)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub data: Value,
}

impl SuiteReport {
    pub fn new(suite: &str, config_hash: &str, seed: u64, checks: Vec<Check>, data: Value) -> Self {
        Self {
            suite: suite.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
            data,
        }
    }
}

/// Entry of the machine-readable failure list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub suite: String,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

pub fn failures(reports: &[SuiteReport]) -> Vec<Failure> {
    reports
        .iter()
        .flat_map(|r| {
            r.checks.iter().filter(|c| !c.passed).map(|c| Failure {
                suite: r.suite.clone(),
                check: c.name.clone(),
                value: c.value,
                threshold: c.threshold,
                detail: c.detail.clone(),
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// CSV with a leading `# config_hash=… seed=…` comment line.
pub fn write_csv(path: &Path, config_hash: &str, seed: u64, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut file = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    writeln!(file, "# config_hash={config_hash} seed={seed}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shorthand for numeric CSV rows.
pub fn num_rows(rows: impl IntoIterator<Item = Vec<f64>>) -> Vec<Vec<String>> {
    rows.into_iter()
        .map(|r| r.iter().map(f64::to_string).collect())
        .collect()
}

pub fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Human summary: one row per check.
pub fn summary_table(reports: &[SuiteReport]) -> String {
    let mut rows = vec![[
        "suite".to_string(),
        "check".to_string(),
        "value".to_string(),
        "threshold".to_string(),
        "result".to_string(),
    ]];
    for r in reports {
        for c in &r.checks {
            rows.push([
                r.suite.clone(),
                c.name.clone(),
                format!("{:.4e}", c.value),
                format!("{:.4e}", c.threshold),
                if c.passed { "PASS" } else { "FAIL" }.to_string(),
            ]);
        }
    }
    let widths: Vec<usize> = (0..5)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    out.push_str(&format!("{passed}/{} suites passed\n", reports.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_directions() {
        assert!(Check::at_most("a", 1.0, 1.0, "").passed);
        assert!(!Check::at_most("a", 1.1, 1.0, "").passed);
        assert!(!Check::at_least("a", f64::NAN, 0.0, "").passed);
        assert!(!Check::holds("a", false, "").passed);
    }

    #[test]
    fn failures_and_table() {
        let r = SuiteReport::new(
            "decomp",
            "h",
            1,
            vec![Check::holds("ok", true, ""), Check::at_most("bad", 2.0, 1.0, "too big")],
            Value::Null,
        );
        assert!(!r.passed);
        let f = failures(std::slice::from_ref(&r));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].check, "bad");
        let table = summary_table(&[r]);
        assert!(table.contains("FAIL"));
        assert!(table.ends_with("0/1 suites passed\n"));
    }
}
