//! CSV ingestion and output, column selection and standardization.

use std::path::Path;

use gaplm_core::Dataset;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::output::fmt_f64;
use crate::{CliError, Result};

/// A numeric CSV held column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

const MISSING: &[&str] = &["", "na", "nan", "null", "?"];

impl Table {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|c| c == name).ok_or_else(|| CliError::Config(format!("no column named '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    /// Dataset with `covariates` as x columns, in the given order. A missing
    /// response gives y = 0, which is enough for prediction.
    pub fn dataset(&self, response: Option<&str>, covariates: &[String]) -> Result<Dataset> {
        let n = self.n_rows();
        let y = match response {
            Some(r) => self.column(r)?.to_vec(),
            None => vec![0.0; n],
        };
        let cols: Vec<&[f64]> = covariates.iter().map(|c| self.column(c)).collect::<Result<_>>()?;
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok(Dataset::new(y, x)?.with_names(covariates.to_vec())?)
    }
}

pub fn load_csv(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

/// Rows with a missing cell are collected and reported together by data
/// row number (1 = first row after the header).
pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> =
        rdr.headers().map_err(|e| CliError::Data(format!("csv header: {e}")))?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::Data("empty file".into()));
    }
    let mut seen = names.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != names.len() {
        return Err(CliError::Data("duplicate column names in header".into()));
    }
    let mut columns = vec![Vec::new(); names.len()];
    let mut missing_rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("csv: {e}")))?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        let mut missing = false;
        let mut values = Vec::with_capacity(names.len());
        for (col, cell) in rec.iter().enumerate() {
            if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("line {line}, column {} ('{}'): cannot parse '{cell}'", col + 1, names[col]))
            })?;
            if !v.is_finite() {
                missing = true;
            }
            values.push(v);
        }
        if missing {
            missing_rows.push(row + 1);
            continue;
        }
        for (c, v) in columns.iter_mut().zip(values) {
            c.push(v);
        }
    }
    if !missing_rows.is_empty() {
        let shown: Vec<String> = missing_rows.iter().take(20).map(usize::to_string).collect();
        let more =
            if missing_rows.len() > 20 { format!(" and {} more", missing_rows.len() - 20) } else { String::new() };
        return Err(CliError::Data(format!("missing values in row(s) {}{more}", shown.join(", "))));
    }
    if columns[0].is_empty() {
        return Err(CliError::Data("no data rows".into()));
    }
    Ok(Table { names, columns })
}

/// Writes a numeric table with 17 significant digits.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(format!("csv: {e}")))?;
    w.write_record(&table.names).map_err(|e| CliError::Data(format!("csv: {e}")))?;
    for i in 0..table.n_rows() {
        w.write_record(table.columns.iter().map(|c| fmt_f64(c[i]))).map_err(|e| CliError::Data(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn fit(data: &Dataset) -> Result<Self> {
        let n = data.n() as f64;
        let mut means = Vec::with_capacity(data.p());
        let mut sds = Vec::with_capacity(data.p());
        for j in 0..data.p() {
            let c = data.column(j);
            let m = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            if sd <= 0.0 {
                return Err(CliError::Data(format!(
                    "column '{}' is constant and cannot be standardized",
                    data.column_name(j)
                )));
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Standardization { means, sds })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.p() != self.means.len() {
            return Err(CliError::Data(format!("expected {} covariates, got {}", self.means.len(), data.p())));
        }
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| (data.x[(i, j)] - self.means[j]) / self.sds[j]);
        let mut out = Dataset::new(data.y.clone(), x)?;
        out.column_names = data.column_names.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_table() {
        let t = read_csv("y,x\n1,2\n0,3\n1,4\n".as_bytes()).unwrap();
        let d = t.dataset(Some("y"), &["x".to_string()]).unwrap();
        assert_eq!((d.n(), d.p()), (3, 1));
        assert_eq!(d.y, vec![1.0, 0.0, 1.0]);
        assert_eq!(d.column_name(0), "x");
    }

    #[test]
    fn missing_cells_name_rows() {
        let err = read_csv("y,x\n1,2\n0,NA\n1,4\n,5\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row(s) 2, 4"), "{msg}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn parse_errors_and_empty() {
        let e = read_csv("y,x\n1,abc\n".as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("column 2"), "{e}");
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("y,x\n".as_bytes()).is_err());
        assert!(read_csv("y,y\n1,2\n".as_bytes()).is_err());
        assert!(read_csv("y,x\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn standardization_uses_population_variance() {
        let t = read_csv("y,x\n0,1\n0,2\n0,3\n0,4\n".as_bytes()).unwrap();
        let d = t.dataset(Some("y"), &["x".to_string()]).unwrap();
        let s = Standardization::fit(&d).unwrap();
        assert_eq!(s.means, vec![2.5]);
        assert!((s.sds[0] - 1.25f64.sqrt()).abs() < 1e-15);
        let z = s.apply(&d).unwrap();
        let var: f64 = z.column(0).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-14);
    }
}
