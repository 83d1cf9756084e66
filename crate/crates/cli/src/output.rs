use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use wishartlab::SymMatrix;

use crate::config::{Command, SCHEMA_VERSION};
use crate::CliError;

/// Run metadata. The timestamp lives here so that report bodies are
/// byte-identical across reruns of the same config and seed.
#[derive(Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema_version: u32,
    pub command: &'static str,
    pub timestamp_unix_ms: u128,
}

impl Header {
    pub fn new(command: Command) -> Self {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        Header {
            tool: "wishartlab",
            version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            command: command.name(),
            timestamp_unix_ms: now,
        }
    }
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub header: Header,
    pub result: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, format!("{text}\n")).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(text)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

pub fn resolve(dir: &Path, name: &Option<String>, default: &str) -> PathBuf {
    dir.join(name.as_deref().unwrap_or(default))
}

/// Column names `x{i}_{j}` (1-based, `i ≤ j`) for a flattened upper triangle.
pub fn upper_headers(d: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 1..=d {
        for j in i..=d {
            out.push(format!("x{i}_{j}"));
        }
    }
    out
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn upper_fields(m: &SymMatrix) -> impl Iterator<Item = String> {
    m.upper_triangle().into_iter().map(|v| v.to_string())
}

pub fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_follow_the_upper_triangle() {
        assert_eq!(upper_headers(2), vec!["x1_1", "x1_2", "x2_2"]);
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(upper_fields(&m).collect::<Vec<_>>(), vec!["1", "2", "3"]);
    }
}
