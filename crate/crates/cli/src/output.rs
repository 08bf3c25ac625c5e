//! Atomic file output and the versioned CSV schemas.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub const PMF_SCHEMA: &str = "qmgeo-pmf/1";
pub const QUANTIZED_SCHEMA: &str = "qmgeo-quantized/1";
pub const SWEEP_SCHEMA: &str = "qmgeo-sweep/1";
pub const METRICS_SCHEMA: &str = "qmgeo-metrics/1";
pub const BOUND_SCHEMA: &str = "qmgeo-bound/1";

const SCHEMA_PREFIX: &str = "# schema: ";

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let target = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
    tmp.write_all(contents).map_err(|e| io_error(&target, e))?;
    tmp.flush().map_err(|e| io_error(&target, e))?;
    tmp.persist(&target).map_err(|e| io_error(&target, e.error))?;
    Ok(target)
}

/// CSV text with a leading schema comment line.
pub struct CsvTable {
    schema: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(schema: &'static str, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { schema, writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let body = self.writer.into_inner().expect("in-memory flush");
        let mut out = format!("{SCHEMA_PREFIX}{}\n", self.schema).into_bytes();
        out.extend(body);
        out
    }
}

/// A parsed CSV with its columns addressable by name.
pub struct SchemaTable {
    path: PathBuf,
    headers: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl SchemaTable {
    /// Reads `path`, requiring its first line to declare `schema` exactly.
    pub fn read(path: &Path, schema: &str) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let first = text.lines().next().unwrap_or("");
        let declared = first
            .strip_prefix(SCHEMA_PREFIX)
            .ok_or_else(|| io_error(path, format!("line 1: missing `{SCHEMA_PREFIX}...` header")))?
            .trim();
        if declared != schema {
            return Err(io_error(
                path,
                format!("line 1: unsupported schema `{declared}`, expected `{schema}`"),
            ));
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| io_error(path, e))?.clone();
        let rows = reader
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                io_error(path, format!("line {line}: {e}"))
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// All values of a numeric column; a missing column is a schema error.
    pub fn column_f64(&self, name: &str) -> CliResult<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| io_error(&self.path, format!("schema error: missing column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                let field = r.get(idx).unwrap_or("");
                let line = r.position().map_or(0, |p| p.line());
                match field {
                    "+inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    _ => field.parse().map_err(|_| {
                        io_error(&self.path, format!("line {line}: `{field}` in column `{name}` is not a number"))
                    }),
                }
            })
            .collect()
    }
}
