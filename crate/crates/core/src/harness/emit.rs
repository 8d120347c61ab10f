use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Plot-ready CSV with a fixed column schema. Floats use the shortest
/// representation that round-trips.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    columns: Vec<&'static str>,
    body: String,
}

/// One CSV cell.
pub enum Cell<'a> {
    F(f64),
    U(usize),
    S(&'a str),
    B(bool),
}

impl Csv {
    pub fn new(columns: &[&'static str]) -> Self {
        Csv {
            columns: columns.to_vec(),
            body: String::new(),
        }
    }

    pub fn columns(&self) -> &[&'static str] {
        &self.columns
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns.len(), "row does not match the CSV schema");
        for (j, c) in cells.iter().enumerate() {
            if j > 0 {
                self.body.push(',');
            }
            match c {
                Cell::F(v) => write!(self.body, "{v:?}"),
                Cell::U(v) => write!(self.body, "{v}"),
                Cell::S(s) => write!(self.body, "{}", quote(s)),
                Cell::B(b) => write!(self.body, "{b}"),
            }
            .expect("writing to a string cannot fail");
        }
        self.body.push('\n');
    }

    /// Shorthand for rows of floats.
    pub fn floats(&mut self, values: &[f64]) {
        let cells: Vec<Cell> = values.iter().map(|&v| Cell::F(v)).collect();
        self.row(&cells);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.columns.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out.into_bytes()
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Output files of one run, in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn csv(&mut self, name: &str, csv: &Csv) {
        self.push(name, csv.to_bytes());
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        self.push(name, to_json(value));
    }

    fn push(&mut self, name: &str, bytes: Vec<u8>) {
        assert!(
            self.files.iter().all(|(n, _)| n != name),
            "output file `{name}` emitted twice"
        );
        self.files.push((name.to_string(), bytes));
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialise to JSON");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Provenance record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: &'static str,
    pub seed: u64,
    pub paths: usize,
    pub config_sha256: String,
    /// The resolved configuration, overrides applied.
    pub config: String,
    pub passed: bool,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn entries(artifacts: &Artifacts) -> Vec<FileEntry> {
        artifacts
            .files()
            .iter()
            .map(|(name, bytes)| FileEntry {
                name: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_schema_and_formatting() {
        let mut csv = Csv::new(&["epsilon", "metric", "value", "ok"]);
        csv.row(&[Cell::F(0.0625), Cell::S("x1_sq"), Cell::F(1e-7), Cell::B(true)]);
        csv.row(&[Cell::F(0.5), Cell::S("a,b"), Cell::F(f64::NAN), Cell::B(false)]);
        let text = String::from_utf8(csv.to_bytes()).unwrap();
        assert_eq!(text, "epsilon,metric,value,ok\n0.0625,x1_sq,1e-7,true\n0.5,\"a,b\",NaN,false\n");
    }

    #[test]
    fn floats_round_trip() {
        let mut csv = Csv::new(&["v"]);
        let v = 0.1 + 0.2;
        csv.floats(&[v]);
        let text = String::from_utf8(csv.to_bytes()).unwrap();
        let back: f64 = text.lines().nth(1).unwrap().parse().unwrap();
        assert_eq!(back, v);
    }

    #[test]
    #[should_panic(expected = "schema")]
    fn wrong_row_width_panics() {
        Csv::new(&["a", "b"]).floats(&[1.0]);
    }

    #[test]
    fn artifacts_write_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.json("summary.json", &serde_json::json!({"x": 1}));
        a.write_to(&dir.path().join("nested")).unwrap();
        let bytes = std::fs::read(dir.path().join("nested/summary.json")).unwrap();
        assert_eq!(bytes, a.get("summary.json").unwrap());
        let e = Manifest::entries(&a);
        assert_eq!(e[0].sha256.len(), 64);
        assert_eq!(e[0].bytes, bytes.len());
    }
}
