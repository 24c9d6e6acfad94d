//! Sample ingestion, support-set config files and CSV number formatting.

use std::io::Read;
use std::path::Path;

use ddcc_core::SupportSet;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Reads one sample per row. A first row that does not parse as numbers is
/// treated as a header. Every row must have `dim` columns.
pub fn read_samples<R: Read>(reader: R, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Config(format!("row {}: {e}", i + 1))),
        };
        if row.len() != dim {
            return Err(Error::Config(format!("row {} has {} columns, expected {dim}", i + 1, row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_samples_file(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    read_samples(std::fs::File::open(path)?, dim)
}

/// Column count of the first numeric row.
pub fn sniff_dim(path: &Path) -> Result<usize> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    for record in rdr.records() {
        let record = record?;
        if record.iter().all(|f| f.parse::<f64>().is_ok()) {
            return Ok(record.len());
        }
    }
    Err(Error::Config(format!("{} holds no numeric rows", path.display())))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SupportConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Polytope { vertices: Vec<Vec<f64>> },
    Ellipsoid { center: Vec<f64>, shape: Vec<Vec<f64>> },
}

impl SupportConfig {
    pub fn build(&self) -> Result<SupportSet> {
        Ok(match self {
            SupportConfig::Box { lower, upper } => SupportSet::boxed(lower, upper)?,
            SupportConfig::Polytope { vertices } => SupportSet::polytope(vertices.clone())?,
            SupportConfig::Ellipsoid { center, shape } => {
                let n = shape.len();
                if shape.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("ellipsoid shape must be square".into()));
                }
                SupportSet::ellipsoid(center, DMatrix::from_fn(n, n, |i, j| shape[i][j]))?
            }
        })
    }
}

pub fn read_support(path: &Path) -> Result<SupportSet> {
    let cfg: SupportConfig = serde_json::from_reader(std::fs::File::open(path)?)?;
    cfg.build()
}

/// Rounds to 12 significant digits and prints the shortest decimal that
/// round-trips the rounded value. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let a = rounded.abs();
    if (1e-6..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}
