use crate::error::{CliError, CliResult};
use serde::Serialize;
use std::fmt::Display;
use std::fs;
use std::path::Path;

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))
}

/// Pretty JSON with struct field order preserved. Floats use the shortest
/// representation that reads back to the same value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(format!("{}: serialization failed: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path.display().to_string()))
}

/// Writes a CSV with the given header and rows of displayable cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(format!("{name}: {e}")))?;
    w.write_record(header).map_err(|e| CliError::data(format!("{name}: {e}")))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::data(format!("{name}: {e}")))?;
    }
    w.flush().map_err(CliError::io(name))
}

/// A row of the plot-data files: `series, x, y, lo, hi`.
pub fn plot_row(series: &str, x: impl Display, y: f64, lo: f64, hi: f64) -> Vec<String> {
    vec![series.to_string(), x.to_string(), y.to_string(), lo.to_string(), hi.to_string()]
}

pub const PLOT_HEADER: [&str; 5] = ["series", "x", "y", "lo", "hi"];

pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
