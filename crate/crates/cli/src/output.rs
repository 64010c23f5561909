//! Artifacts: a table written as CSV or JSON, plus a JSON manifest.
//!
//! All files are written to a temporary sibling and renamed into place, so a
//! reader never observes a partial artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use treecalc::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::S(String::new()), Cell::F)
    }
}

/// Shortest round-trip decimal; non-finite values as `inf`, `-inf`, `nan`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        Value::from(v).to_string()
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::F(v) => format_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(v) => Value::from(*v),
            Cell::I(v) => Value::from(*v),
            Cell::B(v) => Value::from(*v),
            Cell::S(v) => Value::from(v.as_str()),
        }
    }
}

/// Rows under a fixed header, plus scalar results describing the whole run.
#[derive(Clone, Debug, Default)]
pub struct Output {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Map<String, Value>,
}

impl Output {
    pub fn new(columns: &[&'static str]) -> Self {
        Output { columns: columns.to_vec(), ..Output::default() }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }

    pub fn json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                Value::Object(obj)
            })
            .collect();
        json!({ "columns": self.columns, "rows": rows, "summary": self.summary })
    }

    /// CSV when the path ends in `.csv`, JSON otherwise.
    pub fn bytes_for(&self, path: &Path) -> Result<Vec<u8>> {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            self.csv()
        } else {
            json_bytes(&self.json())
        }
    }
}

/// Sorted keys (maps are ordered), two-space indent, trailing newline.
pub fn json_bytes(value: &Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::input(format!("output path {} names no file", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hash of the canonical config followed by every input file, in order.
pub fn input_hash(config: &Value, inputs: &[(String, Vec<u8>)]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    Ok(hex(&h.finalize()))
}
