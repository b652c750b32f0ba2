//! Binary grid snapshots: one line of JSON, a newline, then the values as
//! little-endian `f64` in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fields::{GridField, GridSpec};
use crate::gmc::GridMeasure;

/// Header line of a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    /// `"field"` or `"measure"`.
    pub content: String,
    pub grid: GridSpec,
    pub meta: Value,
    /// Seed of the stream the values were drawn from.
    pub seed: u64,
    /// Master seed of the run that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub config_hash: Option<String>,
    pub count: usize,
}

pub fn write_snapshot_to(w: &mut impl Write, header: &SnapshotHeader, values: &[f64]) -> Result<()> {
    if header.count != values.len() {
        return Err(Error::Format(format!(
            "header declares {} values, got {}",
            header.count,
            values.len()
        )));
    }
    serde_json::to_writer(&mut *w, header)?;
    w.write_all(b"\n")?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot_from(r: &mut impl BufRead) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            header.count * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, values))
}

pub fn write_snapshot(path: &Path, header: &SnapshotHeader, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot_to(&mut w, header, values)?;
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Vec<f64>)> {
    read_snapshot_from(&mut BufReader::new(File::open(path)?))
}

pub fn field_header(field: &GridField, config_hash: Option<&str>) -> SnapshotHeader {
    SnapshotHeader {
        content: "field".into(),
        grid: field.grid.clone(),
        meta: serde_json::to_value(&field.meta).expect("serialisable"),
        seed: field.meta.rng_seed,
        master_seed: None,
        config_hash: config_hash.map(str::to_string),
        count: field.values.len(),
    }
}

pub fn measure_header(measure: &GridMeasure, config_hash: Option<&str>) -> SnapshotHeader {
    SnapshotHeader {
        content: "measure".into(),
        grid: measure.grid.clone(),
        meta: serde_json::to_value(&measure.meta).expect("serialisable"),
        seed: measure.meta.rng_seed,
        master_seed: None,
        config_hash: config_hash.map(str::to_string),
        count: measure.weights.len(),
    }
}

pub fn write_field(path: &Path, field: &GridField, config_hash: Option<&str>) -> Result<()> {
    write_snapshot(path, &field_header(field, config_hash), &field.values)
}

pub fn read_field(path: &Path) -> Result<GridField> {
    let (header, values) = read_snapshot(path)?;
    if header.content != "field" {
        return Err(Error::Format(format!("expected a field, found {}", header.content)));
    }
    Ok(GridField {
        grid: header.grid,
        values,
        meta: serde_json::from_value(header.meta)?,
    })
}

pub fn write_measure(path: &Path, measure: &GridMeasure, config_hash: Option<&str>) -> Result<()> {
    write_snapshot(path, &measure_header(measure, config_hash), &measure.weights)
}

pub fn read_measure(path: &Path) -> Result<GridMeasure> {
    let (header, weights) = read_snapshot(path)?;
    if header.content != "measure" {
        return Err(Error::Format(format!("expected a measure, found {}", header.content)));
    }
    Ok(GridMeasure {
        grid: header.grid,
        weights,
        meta: serde_json::from_value(header.meta)?,
    })
}
