use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV cell. Reals are written with 17 significant digits in scientific
/// notation, which parses back to the identical `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Real(f64),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::Text(s) => out.push_str(s),
            Cell::Int(v) => write!(out, "{v}").expect("write to String"),
            Cell::Real(v) => write!(out, "{v:.16e}").expect("write to String"),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

/// A CSV table with a fixed header line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }

    /// Parse CSV text written by [`Table::to_csv`]. Cells that parse as
    /// integers or reals come back typed, everything else as text.
    pub fn parse(text: &str) -> Result<Table> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing header".into(),
            })?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<Cell> = line.split(',').map(parse_cell).collect();
            if cells.len() != header.len() {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("expected {} cells, found {}", header.len(), cells.len()),
                });
            }
            rows.push(cells);
        }
        Ok(Table { header, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column as `f64`; text cells are an error.
    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("no column {name:?}")))?;
        self.rows
            .iter()
            .map(|r| match &r[c] {
                Cell::Real(v) => Ok(*v),
                Cell::Int(v) => Ok(*v as f64),
                Cell::Text(s) => Err(Error::invalid(format!("column {name:?} holds text {s:?}"))),
            })
            .collect()
    }

    pub fn column_text(&self, name: &str) -> Result<Vec<String>> {
        let c = self
            .column_index(name)
            .ok_or_else(|| Error::invalid(format!("no column {name:?}")))?;
        let mut out = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let mut s = String::new();
            r[c].render(&mut s);
            out.push(s);
        }
        Ok(out)
    }
}

fn parse_cell(s: &str) -> Cell {
    if let Ok(v) = s.parse::<u64>() {
        Cell::Int(v)
    } else if s.contains(['e', '.']) && !s.starts_with(|c: char| c.is_ascii_alphabetic()) {
        s.parse::<f64>()
            .map(Cell::Real)
            .unwrap_or_else(|_| Cell::Text(s.to_string()))
    } else {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
}

impl Hardware {
    pub fn detect() -> Self {
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub experiment: String,
    pub mode: String,
    pub master_seed: u64,
    pub trial_seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub hardware: Hardware,
    /// Outputs that reproduce byte-for-byte from this manifest.
    pub files: Vec<String>,
    /// Outputs carrying wall-clock measurements.
    pub timing_files: Vec<String>,
}

/// Per-trial outcome of one method, the unit every summary aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub sigma: f64,
    pub n_atoms: usize,
    pub m_train: usize,
    pub trial: usize,
    pub seed: u64,
    /// Selected parameter: k, δ or λ.
    pub param: f64,
    pub test_rmse: f64,
    pub sparsity: usize,
    pub fit_time_s: f64,
}

/// Tables and manifest of one experiment run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest: Manifest,
    pub tables: BTreeMap<String, Table>,
    pub timing: BTreeMap<String, Table>,
    pub trials: Vec<TrialRecord>,
}

impl RunReport {
    pub fn new(manifest: Manifest) -> Self {
        Self {
            manifest,
            tables: BTreeMap::new(),
            timing: BTreeMap::new(),
            trials: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name).or_else(|| self.timing.get(name))
    }

    /// Write every table and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        for (name, table) in self.tables.iter().chain(&self.timing) {
            let path = dir.join(name);
            fs::write(&path, table.to_csv()).map_err(io(&path))?;
        }
        let mut manifest = self.manifest.clone();
        manifest.files = self.tables.keys().cloned().collect();
        manifest.timing_files = self.timing.keys().cloned().collect();
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        let path = dir.join("manifest.json");
        fs::write(&path, json).map_err(io(&path))?;
        Ok(())
    }
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Median, averaging the two middle values of an even-length list.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        (v[h - 1] + v[h]) / 2.0
    }
}
