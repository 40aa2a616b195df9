//! Output files. CSVs start with `#` header lines (tool version, experiment,
//! seed, timestamp); JSON files carry the same facts in a `metadata` object.
//! Reruns with the same seed differ only on the timestamp line.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::format::{fmt_f64, to_json_string};

pub const TOOL: &str = "twocultures";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of every JSON layout this tool writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunInfo {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub seed: u64,
    pub timestamp: String,
}

impl RunInfo {
    pub fn new(experiment: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            experiment: experiment.into(),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    fn csv_header(&self) -> String {
        format!(
            "# {} {}\n# experiment: {}\n# seed: {}\n# timestamp: {}\n",
            self.tool, self.version, self.experiment, self.seed, self.timestamp
        )
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(v) => f.write_str(&fmt_f64(*v)),
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(i64::from(v))
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Num)
    }
}

/// Writes artifacts for one run into one directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    info: RunInfo,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: impl AsRef<Path>, info: RunInfo) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            info,
            written: Vec::new(),
        })
    }

    pub fn info(&self) -> &RunInfo {
        &self.info
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<PathBuf> {
        let path = self.path(name);
        write_csv_to(&path, &self.info, columns, rows)?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// `payload` must serialize to a JSON object; `schema_version`, `kind` and `metadata` are added.
    pub fn write_json<T: Serialize>(&mut self, name: &str, kind: &str, payload: &T) -> Result<PathBuf> {
        let path = self.path(name);
        write_json_to(&path, &self.info, kind, payload)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

pub fn write_csv_to(path: &Path, info: &RunInfo, columns: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<()> {
    let mut out = info.csv_header().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for row in rows {
            anyhow::ensure!(row.len() == columns.len(), "{}: row has {} cells, header has {}", path.display(), row.len(), columns.len());
            w.write_record(row.iter().map(ToString::to_string))?;
        }
        w.flush()?;
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn envelope<T: Serialize>(info: &RunInfo, kind: &str, payload: &T) -> Result<Value> {
    let mut map = match serde_json::to_value(payload)? {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    map.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
    map.insert("kind".into(), Value::from(kind));
    map.insert("metadata".into(), serde_json::to_value(info)?);
    Ok(Value::Object(map))
}

pub fn write_json_to<T: Serialize>(path: &Path, info: &RunInfo, kind: &str, payload: &T) -> Result<()> {
    let text = to_json_string(&envelope(info, kind, payload)?)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// File contents with the timestamp line removed, for rerun comparisons.
pub fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# timestamp:") && !l.trim_start().starts_with("\"timestamp\":"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_exact_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path(), RunInfo::new("demo", 7)).unwrap();
        let path = w.write_csv("t.csv", &["name", "value"], vec![vec!["a".into(), 0.1.into()]]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# twocultures "));
        assert_eq!(lines[1], "# experiment: demo");
        assert_eq!(lines[2], "# seed: 7");
        assert!(lines[3].starts_with("# timestamp: "));
        assert_eq!(lines[4], "name,value");
        assert_eq!(lines[5], "a,1.0000000000000001e-1");
        assert!(w.write_csv("bad.csv", &["a"], vec![vec![1.0.into(), 2.0.into()]]).is_err());
    }

    #[test]
    fn json_timestamp_is_one_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path(), RunInfo::new("demo", 1)).unwrap();
        let path = w.write_json("m.json", "metrics", &serde_json::json!({"x": 1.5})).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("timestamp")).count(), 1);
        let stripped = strip_timestamp(&text);
        assert!(!stripped.contains("timestamp") && stripped.contains("\"seed\": 1"));
    }
}
