//! Sample and matrix CSV files plus the grid metadata sidecar.
//!
//! A sample file has one observation per row and one grid point per column,
//! no header. Next to `name.csv` lives `name.grid.json` holding
//! `{"m": <int>, "rule": "equidistant"}`; when the sidecar is absent the
//! equidistant grid with one point per column is assumed.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{make_equidistant_grid, sample_grid, Curve, Grid};

pub const EQUIDISTANT_RULE: &str = "equidistant";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMeta {
    pub m: usize,
    pub rule: String,
}

impl GridMeta {
    pub fn equidistant(m: usize) -> Self {
        GridMeta { m, rule: EQUIDISTANT_RULE.to_string() }
    }

    pub fn to_grid(&self) -> Result<Arc<Grid>> {
        if self.rule != EQUIDISTANT_RULE {
            return Err(Error::InvalidArgument(format!(
                "unsupported quadrature rule {:?}",
                self.rule
            )));
        }
        make_equidistant_grid(self.m)
    }
}

/// `dir/name.csv` → `dir/name.grid.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("grid.json")
}

/// Parses rows of numbers; every row must have the same length.
pub fn read_matrix<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("row {}: cannot parse {field:?}: {e}", line + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::InvalidArgument(format!(
                    "row {} has {} columns, expected {first}",
                    line + 1,
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_matrix<'a, W: Write>(writer: W, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in rows {
        wtr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a sample on a known grid.
pub fn read_sample_from<R: Read>(reader: R, grid: Option<Arc<Grid>>) -> Result<Vec<Curve>> {
    let rows = read_matrix(reader)?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("sample file has no rows".into()));
    }
    let grid = match grid {
        Some(g) => g,
        None => make_equidistant_grid(rows[0].len())?,
    };
    rows.into_iter().map(|r| Curve::new(grid.clone(), r)).collect()
}

pub fn read_grid_meta(path: &Path) -> Result<Option<GridMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let meta: GridMeta = serde_json::from_reader(File::open(side)?)?;
    Ok(Some(meta))
}

pub fn read_sample_csv(path: &Path) -> Result<Vec<Curve>> {
    let grid = read_grid_meta(path)?.map(|m| m.to_grid()).transpose()?;
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_sample_from(file, grid)
}

/// Writes the sample and its grid sidecar.
pub fn write_sample_csv(path: &Path, sample: &[Curve]) -> Result<()> {
    let grid = sample_grid(sample)?;
    if !grid.is_equidistant() {
        return Err(Error::InvalidArgument(
            "only equidistant grids can be described by the sidecar".into(),
        ));
    }
    write_matrix(File::create(path)?, sample.iter().map(|c| c.values()))?;
    let meta = GridMeta::equidistant(grid.m());
    let mut side = File::create(sidecar_path(path))?;
    serde_json::to_writer(&mut side, &meta)?;
    side.write_all(b"\n")?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, curve: &Curve) -> Result<()> {
    write_matrix(File::create(path)?, std::iter::once(curve.values()))
}

/// Reads a one-row curve file onto `grid`.
pub fn read_curve_csv(path: &Path, grid: Arc<Grid>) -> Result<Curve> {
    let rows = read_matrix(File::open(path)?)?;
    match rows.len() {
        1 => Curve::new(grid, rows.into_iter().next().unwrap()),
        n => Err(Error::InvalidArgument(format!("expected a single row, got {n}"))),
    }
}

pub fn write_kernel_csv(path: &Path, kernel: &nalgebra::DMatrix<f64>) -> Result<()> {
    let rows: Vec<Vec<f64>> = kernel.row_iter().map(|r| r.iter().copied().collect()).collect();
    write_matrix(File::create(path)?, rows.iter().map(|r| r.as_slice()))
}
