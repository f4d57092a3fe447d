//! CSV ingestion and export, JSON helpers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::synthetic::{GroundTruth, SyntheticData};

/// A loaded table: the centered design and, when requested, the response.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub x: DesignMatrix,
    pub y: Option<DVector<f64>>,
    /// Names of columns dropped for being constant.
    pub dropped: Vec<String>,
}

fn is_constant(col: &[f64]) -> bool {
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let spread = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>().sqrt();
    spread <= 1e-12 * scale.max(1.0) * (col.len() as f64).sqrt()
}

/// Reads a CSV with a header row and numeric cells. The column named
/// `response`, if given, becomes `y`; every other column goes into the
/// design, which is centered. Constant columns are dropped with a warning.
/// Reported row numbers count the header as row 1.
pub fn load_csv(path: &Path, response: Option<&str>) -> Result<LoadedData> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for (c, name) in header.iter().enumerate() {
        if !seen.insert(name.as_str()) {
            return Err(Error::Parse {
                row: 1,
                column: c + 1,
                message: format!("duplicate column name {name:?}"),
            });
        }
    }
    let response_col = match response {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::invalid(format!("response column {name:?} not found")))?,
        ),
        None => None,
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 2;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            columns[c].push(v);
        }
    }
    let n = columns.first().map_or(0, Vec::len);

    let y = response_col.map(|c| DVector::from_vec(columns[c].clone()));
    let mut kept = Vec::new();
    let mut names = Vec::new();
    let mut dropped = Vec::new();
    for (c, col) in columns.into_iter().enumerate() {
        if Some(c) == response_col {
            continue;
        }
        if n > 0 && is_constant(&col) {
            log::warn!("dropping constant column {:?}", header[c]);
            dropped.push(header[c].clone());
            continue;
        }
        kept.push(col);
        names.push(header[c].clone());
    }
    if kept.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no non-constant feature columns",
            path.display()
        )));
    }
    let values = DMatrix::from_fn(n, kept.len(), |i, j| kept[j][i]);
    let x = DesignMatrix::new(values)?.with_names(names)?;
    log::info!(
        "loaded {} rows and {} features from {}",
        x.n(),
        x.p(),
        path.display()
    );
    Ok(LoadedData { x, y, dropped })
}

/// Writes the design (and optionally the response, as the last column named
/// `response_name`) as CSV with a header row.
pub fn write_csv(path: &Path, x: &DesignMatrix, y: Option<(&str, &DVector<f64>)>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = (0..x.p()).map(|j| x.name(j)).collect();
    if let Some((name, v)) = y {
        if v.len() != x.n() {
            return Err(Error::DimensionMismatch {
                expected: x.n(),
                found: v.len(),
            });
        }
        header.push(name.to_owned());
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..x.n() {
        row.clear();
        row.extend((0..x.p()).map(|j| x.values()[(i, j)].to_string()));
        if let Some((_, v)) = y {
            row.push(v[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Column name used for synthetic responses.
pub const RESPONSE_COLUMN: &str = "y";

/// Writes `<stem>.csv` and the ground truth to `<stem>.truth.json` in `dir`.
pub fn export_synthetic(dir: &Path, stem: &str, data: &SyntheticData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join(format!("{stem}.csv")),
        &data.x,
        Some((RESPONSE_COLUMN, &data.y)),
    )?;
    write_json(&dir.join(format!("{stem}.truth.json")), &data.truth)
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    read_json(path)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Serializes `rows` as CSV with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
