//! Rows and writers for the CSV reports.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct CylinderRow {
    pub word: String,
    pub start: i64,
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarcusRow {
    pub observable: String,
    pub n: usize,
    pub inf: f64,
    pub sup: f64,
    pub gap: f64,
    pub reference: f64,
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LeafwiseRow {
    pub base: usize,
    pub point: String,
    pub factor: f64,
    pub defect: f64,
    pub cylinders: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitRow {
    pub orbit: usize,
    pub average: f64,
}

/// Writes one header line and one line per row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
