//! Tabular input files: a header row of column names, then decimal values.
//! Lines starting with `#` are skipped, so written artifacts load back.

use std::path::{Path, PathBuf};

use thiserror::Error;
use twocultures_core::Matrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: malformed CSV: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{path}: the file has no header row")]
    MissingHeader { path: PathBuf },

    #[error("{path}: line {line} has {found} fields, the header has {expected}")]
    Ragged {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{path}: line {line}, column '{column}': cannot parse {value:?} as a finite number")]
    BadCell {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },

    #[error("{path}: no column named '{column}' (available: {available})")]
    MissingColumn { path: PathBuf, column: String, available: String },

    #[error("{path}: {message}")]
    Roles { path: PathBuf, message: String },
}

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref().to_path_buf();
        let file = std::fs::File::open(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let columns: Vec<String> = reader
            .headers()
            .map_err(|source| DataError::Csv { path: path.clone(), source })?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(DataError::MissingHeader { path });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|source| DataError::Csv { path: path.clone(), source })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != columns.len() {
                return Err(DataError::Ragged {
                    path,
                    line,
                    expected: columns.len(),
                    found: record.len(),
                });
            }
            let row = record
                .iter()
                .zip(&columns)
                .map(|(cell, column)| match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(DataError::BadCell {
                        path: path.clone(),
                        line,
                        column: column.clone(),
                        value: cell.to_string(),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self { path, columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| DataError::MissingColumn {
            path: self.path.clone(),
            column: name.to_string(),
            available: self.columns.join(", "),
        })
    }

    /// The listed columns as an `n × k` matrix.
    pub fn select(&self, names: &[String]) -> Result<Matrix, DataError> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix::from_fn(self.rows.len(), idx.len(), |i, j| self.rows[i][idx[j]]))
    }
}

/// Inputs and outputs split out of a table.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    /// `n × 0` when no output columns are present.
    pub y: Matrix,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
}

impl Dataset {
    pub fn summary(&self) -> String {
        format!("{} rows, {} inputs, {} outputs", self.x.nrows(), self.x.ncols(), self.y.ncols())
    }
}

/// How unspecified column roles are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputDefault {
    /// The last column is the output.
    LastColumn,
    /// No outputs unless named.
    None,
}

/// Loads `path` and splits it. Empty `inputs` means every column that is not an output.
pub fn load_csv(path: impl AsRef<Path>, inputs: &[String], outputs: &[String], default: OutputDefault) -> Result<Dataset, DataError> {
    let table = Table::read(path)?;
    split(&table, inputs, outputs, default)
}

pub fn split(table: &Table, inputs: &[String], outputs: &[String], default: OutputDefault) -> Result<Dataset, DataError> {
    let output_names: Vec<String> = if !outputs.is_empty() {
        outputs.to_vec()
    } else if default == OutputDefault::LastColumn && inputs.is_empty() {
        vec![table.columns.last().expect("header is non-empty").clone()]
    } else if default == OutputDefault::LastColumn {
        let rest: Vec<String> = table.columns.iter().filter(|c| !inputs.contains(c)).cloned().collect();
        rest.last().cloned().into_iter().collect()
    } else {
        Vec::new()
    };
    let input_names: Vec<String> = if inputs.is_empty() {
        table.columns.iter().filter(|c| !output_names.contains(c)).cloned().collect()
    } else {
        inputs.to_vec()
    };
    if input_names.is_empty() {
        return Err(DataError::Roles {
            path: table.path.clone(),
            message: "no input columns remain".into(),
        });
    }
    if let Some(c) = input_names.iter().find(|c| output_names.contains(c)) {
        return Err(DataError::Roles {
            path: table.path.clone(),
            message: format!("column '{c}' is both an input and an output"),
        });
    }
    Ok(Dataset {
        x: table.select(&input_names)?,
        y: table.select(&output_names)?,
        input_names,
        output_names,
    })
}

/// Splits a comma-separated column list.
pub fn parse_columns(spec: Option<&str>) -> Vec<String> {
    spec.map(|s| s.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
        .unwrap_or_default()
}
