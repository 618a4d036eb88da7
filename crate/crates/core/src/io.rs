//! Small CSV helpers shared by the export paths.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::Result;

/// Formats a number with 17 significant digits so it round-trips exactly.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a dense matrix, one row per line, with `col_0..col_{n-1}` headers.
pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..matrix.ncols()).map(|j| format!("col_{j}")).collect();
    w.write_record(&header)?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| fmt_real(matrix[(i, j)])).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v = field.trim().parse::<f64>().map_err(|e| crate::Error::Ingestion {
                path: path.to_path_buf(),
                row: i + 1,
                column: j + 1,
                message: e.to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.1 + 0.2, -3.5e-300, 4.0, 5.0, 1.0 / 3.0]);
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }
}
