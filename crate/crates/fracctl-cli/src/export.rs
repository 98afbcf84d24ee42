//! CSV time series and JSON documents.

use crate::error::CliError;
use nalgebra::DVector;
use serde::Serialize;
use std::fs;
use std::path::Path;

/// Sampled state and control, one row per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

/// 17 significant digits, enough to reproduce every f64 exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn header(d: usize, n_inputs: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=d).map(|i| format!("y_{i}")));
    h.extend((1..=n_inputs).map(|i| format!("u_{i}")));
    h
}

pub fn write_series(path: &Path, s: &Series) -> Result<(), CliError> {
    let d = s.y.first().map_or(0, |v| v.len());
    let n_in = s.u.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header(d, n_in)).map_err(|e| csv_io(path, e))?;
    for ((t, y), u) in s.t.iter().zip(&s.y).zip(&s.u) {
        let row = std::iter::once(fmt(*t)).chain(y.iter().map(|x| fmt(*x))).chain(u.iter().map(|x| fmt(*x)));
        w.write_record(row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn read_series(path: &Path, d: usize, n_inputs: usize) -> Result<Series, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let want = header(d, n_inputs);
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != want {
        return Err(CliError::Input(format!("{}: header {:?}, expected {:?}", path.display(), got, want)));
    }
    let mut s = Series { t: Vec::new(), y: Vec::new(), u: Vec::new() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Input(format!("{} row {}: {e}", path.display(), line + 1)))?;
        s.t.push(vals[0]);
        s.y.push(DVector::from_column_slice(&vals[1..=d]));
        s.u.push(DVector::from_column_slice(&vals[d + 1..]));
    }
    Ok(s)
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(format!("json: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path.display().to_string(), io),
        other => CliError::Input(format!("{}: {other:?}", path.display())),
    }
}
