use std::path::Path;

use nalgebra::DVector;

use crate::error::{HarnessError, Result};

/// Selected numeric columns of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvData {
    pub rows: Vec<DVector<f64>>,
    /// Rows dropped because a selected cell was empty or not a number.
    pub skipped: usize,
}

/// Reads `columns` from the headed CSV at `path`, keeping at most `limit`
/// data rows (counted before any are skipped).
pub fn ingest_csv_limited(path: &Path, columns: &[String], limit: Option<usize>) -> Result<CsvData> {
    if !path.exists() {
        return Err(HarnessError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| HarnessError::MissingColumn(c.clone()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (i, record) in reader.records().enumerate() {
        if limit.is_some_and(|l| i >= l) {
            break;
        }
        let record = record?;
        let values: Option<Vec<f64>> = index
            .iter()
            .map(|&j| {
                record
                    .get(j)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        match values {
            Some(v) => rows.push(DVector::from_vec(v)),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!(
            "{}: skipped {skipped} rows with missing or non-numeric values",
            path.display()
        );
    }
    if rows.is_empty() {
        return Err(HarnessError::NoUsableRows(path.to_path_buf()));
    }
    Ok(CsvData { rows, skipped })
}

pub fn ingest_csv(path: &Path, columns: &[String]) -> Result<CsvData> {
    ingest_csv_limited(path, columns, None)
}
