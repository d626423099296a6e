//! Snapshot files: a one-line JSON header, a newline, then the field values
//! as little-endian `f64` in the grid's flat index order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Grid, ScalarField};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub points_per_axis: usize,
    pub field_name: String,
    pub time: f64,
    pub encoding: String,
    pub len: usize,
}

pub const ENCODING: &str = "f64-le";

pub fn write_snapshot(path: &Path, field: &ScalarField, field_name: &str, time: f64) -> Result<()> {
    let grid = field.grid();
    let header = SnapshotHeader {
        n: grid.n_complex(),
        points_per_axis: grid.points_per_axis(),
        field_name: field_name.to_string(),
        time,
        encoding: ENCODING.to_string(),
        len: grid.point_count(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a snapshot onto `grid`, which must match the header's shape.
pub fn read_snapshot(path: &Path, grid: &Grid) -> Result<(SnapshotHeader, ScalarField)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: SnapshotHeader = serde_json::from_slice(&line)?;
    if header.encoding != ENCODING {
        return Err(Error::Snapshot(format!("unsupported encoding {:?}", header.encoding)));
    }
    if header.n != grid.n_complex() || header.points_per_axis != grid.points_per_axis() {
        return Err(Error::Snapshot(format!(
            "snapshot grid (n = {}, N = {}) does not match (n = {}, N = {})",
            header.n,
            header.points_per_axis,
            grid.n_complex(),
            grid.points_per_axis()
        )));
    }
    if header.len != grid.point_count() {
        return Err(Error::Snapshot(format!("header length {} is inconsistent", header.len)));
    }
    let mut bytes = Vec::with_capacity(header.len * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != header.len * 8 {
        return Err(Error::Snapshot(format!(
            "expected {} payload bytes, found {}",
            header.len * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    let field = ScalarField::new(grid, values)?;
    Ok((header, field))
}
