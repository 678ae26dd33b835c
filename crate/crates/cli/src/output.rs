use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tempfile::NamedTempFile;

use crate::config::Format;
use crate::error::CliError;

/// Column-oriented artifact rendered as CSV or as `{columns, rows}` JSON.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Json => pretty(&json!({ "columns": self.columns, "rows": self.rows })),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let fail = |e: csv::Error| CliError::io(e.to_string());
                w.write_record(&self.columns).map_err(fail)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell)).map_err(fail)?;
                }
                w.into_inner().map_err(|e| CliError::io(e.to_string()))
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn pretty(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes artifacts into one directory, each through a temporary file that is
/// renamed into place.
pub struct OutDir {
    dir: PathBuf,
    format: Format,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), format, written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let fail = |e: std::io::Error| CliError::io(format!("{}: {e}", path.display()));
        let mut tmp = NamedTempFile::new_in(&self.dir).map_err(fail)?;
        tmp.write_all(bytes).map_err(fail)?;
        // temporary files are created private; artifacts get ordinary permissions
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644)).map_err(fail)?;
        }
        tmp.persist(&path).map_err(|e| fail(e.error))?;
        self.written.push(path);
        Ok(())
    }

    pub fn report(&mut self, stem: &str, value: &impl Serialize) -> Result<(), CliError> {
        self.write(&format!("{stem}.json"), &pretty(value)?)
    }

    pub fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        let bytes = table.render(self.format)?;
        self.write(&format!("{stem}.{}", self.format.extension()), &bytes)
    }
}
