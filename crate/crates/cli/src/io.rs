//! CSV and TOML file helpers.

use std::path::Path;

use narxstab::benchmarks::Series;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One row of a dataset file; `t` counts from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub t: usize,
    pub u: f64,
    pub y: f64,
}

/// One row of a prediction / simulation file. `y_sim` is empty from the
/// first divergent sample on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    pub t: usize,
    pub y: f64,
    pub y_pred: f64,
    pub y_sim: Option<f64>,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a CSV whose header is `header` even when `rows` is empty.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
        w.write_record(header).map_err(|e| CliError::csv(path, e))?;
        return w.flush().map_err(|e| CliError::io(path, e));
    }
    write_csv(path, rows)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::csv(path, e))
}

pub fn read_series(path: &Path) -> Result<Series, CliError> {
    let rows: Vec<DataRow> = read_csv(path)?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(Series {
        u: rows.iter().map(|r| r.u).collect(),
        y: rows.iter().map(|r| r.y).collect(),
    })
}

pub fn write_series(path: &Path, s: &Series) -> Result<(), CliError> {
    let rows: Vec<DataRow> =
        s.u.iter()
            .zip(&s.y)
            .enumerate()
            .map(|(i, (&u, &y))| DataRow { t: i + 1, u, y })
            .collect();
    write_csv(path, &rows)
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
