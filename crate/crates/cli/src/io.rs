//! CSV ingestion for points, targets, and right-hand sides.
//!
//! Files may start with a header row; it is detected by attempting to parse
//! the first record as numbers. All data rows must be fully numeric and
//! rectangular.

use crate::error::{CliError, CliResult};
use std::path::Path;

/// Numeric rows of a CSV file, header skipped if present.
pub fn read_numeric_csv(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if idx == 0 => continue, // header row
            Err(e) => {
                return Err(CliError::Config(format!(
                    "{}: row {} is not numeric: {e}",
                    path.display(),
                    idx + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(CliError::Config(format!(
            "{}: rows must all have the same nonzero number of columns",
            path.display()
        )));
    }
    Ok(rows)
}

/// Read `(coords, dim)` from a CSV whose columns are all coordinates.
pub fn read_points(path: &Path) -> CliResult<(Vec<f64>, usize)> {
    let rows = read_numeric_csv(path)?;
    let dim = rows[0].len();
    Ok((rows.into_iter().flatten().collect(), dim))
}

/// Read `(coords, dim, targets)` from a CSV whose last column is the target.
pub fn read_points_with_targets(path: &Path) -> CliResult<(Vec<f64>, usize, Vec<f64>)> {
    let rows = read_numeric_csv(path)?;
    let width = rows[0].len();
    if width < 2 {
        return Err(CliError::Config(format!(
            "{}: need at least one coordinate column plus a target column",
            path.display()
        )));
    }
    let dim = width - 1;
    let mut coords = Vec::with_capacity(rows.len() * dim);
    let mut targets = Vec::with_capacity(rows.len());
    for row in rows {
        coords.extend_from_slice(&row[..dim]);
        targets.push(row[dim]);
    }
    Ok((coords, dim, targets))
}

/// Read a single-column CSV as a vector.
pub fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let rows = read_numeric_csv(path)?;
    if rows[0].len() != 1 {
        return Err(CliError::Config(format!(
            "{}: expected exactly one column, found {}",
            path.display(),
            rows[0].len()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(content: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "gphodlr-io-test-{}-{:x}.csv",
            std::process::id(),
            content.as_ptr() as usize
        ));
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn plain_numeric_rows() {
        let p = tmp("1.0,2.0\n3.0,4.0\n");
        let (coords, dim) = read_points(&p).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(coords, vec![1.0, 2.0, 3.0, 4.0]);
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn header_row_is_skipped() {
        let p = tmp("x,y,target\n0.5,1.5,2.5\n-1.0,0.0,1.0\n");
        let (coords, dim, y) = read_points_with_targets(&p).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(coords, vec![0.5, 1.5, -1.0, 0.0]);
        assert_eq!(y, vec![2.5, 1.0]);
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn non_numeric_data_row_rejected() {
        let p = tmp("1.0,2.0\nfoo,4.0\n");
        assert!(matches!(read_points(&p), Err(CliError::Config(_))));
        std::fs::remove_file(p).ok();
    }

    #[test]
    fn vector_requires_single_column() {
        let p = tmp("1.0,2.0\n");
        assert!(read_vector(&p).is_err());
        let p2 = tmp("b\n1.0\n2.5\n");
        assert_eq!(read_vector(&p2).unwrap(), vec![1.0, 2.5]);
        std::fs::remove_file(p).ok();
        std::fs::remove_file(p2).ok();
    }

    #[test]
    fn ragged_rows_rejected() {
        // the csv reader itself rejects ragged records when not flexible
        let p = tmp("1.0,2.0\n3.0\n");
        assert!(read_points(&p).is_err());
        std::fs::remove_file(p).ok();
    }
}
