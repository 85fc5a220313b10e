use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Version of the JSON envelope written by every command.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub options: serde_json::Value,
    /// Node labels in index order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub result: T,
}

impl<'a, T: Serialize> Document<'a, T> {
    pub fn new(command: &'a str, seed: u64, options: &impl Serialize, result: T) -> Self {
        Document {
            schema_version: OUTPUT_SCHEMA_VERSION,
            tool: "netdep",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            options: serde_json::to_value(options).expect("options serialize"),
            labels: None,
            warnings: Vec::new(),
            result,
        }
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| io_err(path, e))
}

/// Runs `f` against the `--out` file if given, else against `out`.
pub fn with_sink(
    path: Option<&Path>,
    out: &mut (dyn Write + Send),
    f: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?);
            f(&mut w)?;
            w.flush().map_err(|e| io_err(p, e))
        }
        None => f(out),
    }
}

pub fn write_json(w: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(netdep::Error::from)?;
    writeln!(w).map_err(|e| CliError::Input(format!("write failed: {e}")))
}
