//! CSV reading and writing.
//!
//! Panel layout: a header row of unit names followed by one row per
//! period, columns in header order.  Floats are written with 17
//! significant digits so a read-back reproduces every bit.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, Result};

/// A panel read from CSV: `values` is T x N, `units` the column names.
#[derive(Debug)]
pub struct Panel {
    pub values: DMatrix<f64>,
    pub units: Vec<String>,
}

/// Formats a float with enough digits to round-trip exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_err(path: &Path, err: std::io::Error) -> CliError {
    CliError::Input(format!("cannot open {}: {err}", path.display()))
}

/// Reads a panel CSV (header row of unit names, one row per period).
pub fn load_panel_csv(path: &Path) -> Result<Panel> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let units: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    if units.is_empty() {
        return Err(CliError::Input(format!(
            "{}: header row is empty",
            path.display()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_num = idx + 1; // 1-based data row, matching the period index
        let record =
            record.map_err(|e| CliError::Input(format!("{}: row {row_num}: {e}", path.display())))?;
        if record.len() != units.len() {
            return Err(CliError::Input(format!(
                "{}: row {row_num} has {} fields, header has {}",
                path.display(),
                record.len(),
                units.len()
            )));
        }
        let mut row = Vec::with_capacity(units.len());
        for (col, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {row_num}, column `{}`: `{field}` is not a number",
                    path.display(),
                    units[col]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Input(format!(
                    "{}: row {row_num}, column `{}`: value is not finite",
                    path.display(),
                    units[col]
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }

    let t = rows.len();
    let n = units.len();
    let values = DMatrix::from_fn(t, n, |r, c| rows[r][c]);
    Ok(Panel { values, units })
}

/// Centers and scales each column to mean zero and unit sample variance
/// (denominator T-1).  Errors on columns with no variation, naming them.
pub fn standardize(panel: &mut Panel) -> Result<()> {
    let t = panel.values.nrows();
    if t < 2 {
        return Err(CliError::Input(
            "standardization needs at least two periods".into(),
        ));
    }
    for (c, unit) in panel.units.iter().enumerate() {
        let mut col = panel.values.column_mut(c);
        let mean = col.iter().sum::<f64>() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0);
        if var <= 0.0 {
            return Err(CliError::Input(format!(
                "column `{unit}` has zero variance; cannot standardize"
            )));
        }
        let sd = var.sqrt();
        for v in col.iter_mut() {
            *v = (*v - mean) / sd;
        }
    }
    Ok(())
}

/// Writes a matrix as CSV under the given column names.
pub fn write_matrix_csv(path: &Path, header: &[String], matrix: &DMatrix<f64>) -> Result<()> {
    assert_eq!(header.len(), matrix.ncols(), "header/matrix width mismatch");
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|c| fmt_float(matrix[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Writes group labels as a one-column CSV with header `label`.
pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads group labels from a one-column CSV with header `label`.
pub fn load_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let file = File::open(path).map_err(|e| open_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: bad header: {e}", path.display())))?;
    if headers.len() != 1 || headers.get(0) != Some("label") {
        return Err(CliError::Input(format!(
            "{}: expected a single `label` column",
            path.display()
        )));
    }

    let mut labels = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_num = idx + 1;
        let record =
            record.map_err(|e| CliError::Input(format!("{}: row {row_num}: {e}", path.display())))?;
        let field = record.get(0).unwrap_or("");
        let label: usize = field.parse().map_err(|_| {
            CliError::Input(format!(
                "{}: row {row_num}: `{field}` is not a nonnegative integer label",
                path.display()
            ))
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no labels after the header",
            path.display()
        )));
    }
    Ok(labels)
}

/// Writes a string to a file, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    let mut file =
        File::create(path).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    file.write_all(contents.as_bytes())
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("rfa-io-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn panel_round_trip_is_exact() {
        let path = temp_path("panel.csv");
        let m = DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-7, 3.0, 1.0 / 3.0, -0.0, 7.25]);
        let names = vec!["a".to_string(), "b".to_string()];
        write_matrix_csv(&path, &names, &m).unwrap();
        let panel = load_panel_csv(&path).unwrap();
        assert_eq!(panel.units, names);
        assert_eq!(panel.values, m);
    }

    #[test]
    fn bad_cells_name_row_and_column() {
        let path = temp_path("bad.csv");
        write_text(&path, "u1,u2\n1.0,2.0\n3.0,oops\n").unwrap();
        let err = load_panel_csv(&path).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(err.contains("`u2`"), "{err}");

        write_text(&path, "u1,u2\n1.0,NaN\n").unwrap();
        let err = load_panel_csv(&path).unwrap_err().to_string();
        assert!(err.contains("not finite"), "{err}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let path = temp_path("ragged.csv");
        write_text(&path, "u1,u2\n1.0,2.0,3.0\n").unwrap();
        let err = load_panel_csv(&path).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn standardize_normalizes_and_rejects_constants() {
        let path = temp_path("std.csv");
        write_text(&path, "u1,u2\n1.0,5.0\n2.0,5.0\n3.0,5.0\n").unwrap();
        let mut panel = load_panel_csv(&path).unwrap();
        let err = standardize(&mut panel).unwrap_err().to_string();
        assert!(err.contains("`u2`"), "{err}");

        write_text(&path, "u1\n1.0\n2.0\n3.0\n").unwrap();
        let mut panel = load_panel_csv(&path).unwrap();
        standardize(&mut panel).unwrap();
        let col: Vec<f64> = panel.values.column(0).iter().copied().collect();
        assert!((col.iter().sum::<f64>()).abs() < 1e-15);
        let var: f64 = col.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!((var - 1.0).abs() < 1e-15);
    }

    #[test]
    fn labels_round_trip() {
        let path = temp_path("labels.csv");
        write_labels_csv(&path, &[1, 1, 2, 3]).unwrap();
        assert_eq!(load_labels_csv(&path).unwrap(), vec![1, 1, 2, 3]);

        write_text(&path, "wrong\n1\n").unwrap();
        assert!(load_labels_csv(&path).is_err());
    }
}
