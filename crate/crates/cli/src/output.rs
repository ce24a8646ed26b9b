//! Output-side plumbing shared by every subcommand: resolving the output
//! directory, the versioned CSV layout, and the run manifest that pins the
//! exact inputs an output set was produced from.

use crate::CliError;
use serde::Serialize;
use std::collections::BTreeMap;
use std::env;
use std::fs;
use std::path::{Path, PathBuf};

/// Environment variable consulted for the output directory when `--out` is
/// not given; the final fallback is the working directory.
pub const OUT_DIR_VAR: &str = "KOOPMAN_OUT_DIR";

/// Version tag stamped into the first line of every CSV so downstream
/// readers can detect layout changes.
pub const CSV_VERSION: &str = "v1";

/// Everything needed to reproduce a run, written next to each output set.
/// Parameters are kept in a sorted map so the JSON is byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario: String,
    pub parameters: BTreeMap<String, String>,
    pub out_dir: String,
}

impl RunManifest {
    pub fn new(command: &str, scenario: &str, out_dir: &Path) -> Self {
        RunManifest {
            tool: "koopman-cli".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            scenario: scenario.into(),
            parameters: BTreeMap::new(),
            out_dir: out_dir.display().to_string(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Numeric(format!("cannot serialize manifest: {e}")))?;
        write_text(&path, &(text + "\n"))?;
        Ok(path)
    }
}

/// Picks the output directory (`--out`, then the environment, then `.`) and
/// makes sure it exists.
pub fn ensure_out_dir(arg: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match arg {
        Some(p) => p.to_path_buf(),
        None => env::var_os(OUT_DIR_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

/// First line of every CSV: `# koopman-cli <command> v1`.
pub fn csv_banner(command: &str) -> String {
    format!("# koopman-cli {command} {CSV_VERSION}")
}

/// Writes a CSV with the version banner, a column header, and one row per
/// line; returns the path written.
pub fn write_csv(
    dir: &Path,
    file: &str,
    command: &str,
    columns: &str,
    rows: &[String],
) -> Result<PathBuf, CliError> {
    let mut text = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + 128);
    text.push_str(&csv_banner(command));
    text.push('\n');
    text.push_str(columns);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    let path = dir.join(file);
    write_text(&path, &text)?;
    Ok(path)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// One CSV row: the epoch followed by the values, in plain shortest-exact
/// float formatting (`NaN` for undefined entries).
pub fn fmt_row(t: f64, values: impl IntoIterator<Item = f64>) -> String {
    let mut row = format!("{t}");
    for v in values {
        row.push(',');
        row.push_str(&format!("{v}"));
    }
    row
}

/// Column header with one group per axis: `name_x1..name_xd`.
pub fn axis_columns(groups: &[&str], dim: usize) -> String {
    let mut header = String::from("t");
    for name in groups {
        for i in 1..=dim {
            header.push(',');
            header.push_str(&format!("{name}_x{i}"));
        }
    }
    header
}
