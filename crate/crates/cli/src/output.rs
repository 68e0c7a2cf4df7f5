//! Output directory, manifest and the error contract of the binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad config or parameters; nothing was computed.
    Validation(String),
    /// A computation failed after validation.
    Compute(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Compute(_) => "compute",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Compute(m) | CliError::Io(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() } })
            .to_string()
    }

    /// Core errors raised while checking parameters.
    pub fn invalid(e: bihmap::Error) -> Self {
        match e {
            bihmap::Error::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Validation(e.to_string()),
        }
    }

    /// Core errors raised during computation.
    pub fn compute(e: bihmap::Error) -> Self {
        match e {
            bihmap::Error::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Compute(e.to_string()),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub module: String,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(module: &str, name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { module: module.into(), name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub status: &'static str,
    pub source: serde_json::Value,
    pub analyses: Vec<String>,
    pub timings: Vec<Timing>,
    pub outputs: Vec<String>,
    pub error: Option<serde_json::Value>,
}

/// Writes artifacts into one directory and keeps `manifest.json` current.
pub struct OutDir {
    root: PathBuf,
    pub manifest: Manifest,
}

impl OutDir {
    /// Creates the directory and writes the initial manifest.
    pub fn create(root: PathBuf, manifest: Manifest) -> CliResult<Self> {
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let out = Self { root, manifest };
        out.write_manifest()?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_manifest(&self) -> CliResult<()> {
        let p = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        self.manifest.outputs.push(name.into());
        self.write_manifest()
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
        self.write_text(name, &(text + "\n"))
    }

    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> CliResult<()> {
        self.write_text(name, csv.text())
    }

    pub fn record(&mut self, stage: &str, seconds: f64) -> CliResult<()> {
        self.manifest.timings.push(Timing { stage: stage.into(), seconds });
        self.write_manifest()
    }

    pub fn fail(&mut self, err: &CliError) {
        self.manifest.status = "failed";
        self.manifest.error = serde_json::from_str(&err.to_json()).ok();
        let _ = self.write_manifest();
    }
}

/// Long-format CSV built row by row. Reals use the shortest round-trip form.
pub struct Csv {
    text: String,
    width: usize,
}

pub enum Cell {
    Int(usize),
    Real(f64),
    Text(String),
    Empty,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        Self { text: header.join(",") + "\n", width: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.width);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = match c {
                Cell::Int(v) => write!(self.text, "{v}"),
                Cell::Real(v) => write!(self.text, "{v:?}"),
                Cell::Text(s) => write!(self.text, "{s}"),
                Cell::Empty => Ok(()),
            };
        }
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Column names `x0, …, x{m-1}`.
pub fn coord_header(m: usize) -> Vec<String> {
    (0..m).map(|a| format!("x{a}")).collect()
}

pub fn coord_cells(x: &[f64]) -> Vec<Cell> {
    x.iter().map(|v| Cell::Real(*v)).collect()
}
