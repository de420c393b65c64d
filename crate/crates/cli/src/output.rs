//! Output files. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial file.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    pub fn create(path: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        Ok(OutputDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.path.join(name);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
        let dir = target.parent().unwrap_or(&self.path);
        let io_err = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
        tmp.write_all(bytes).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&target).map_err(|e| io_err(e.error))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Runtime(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Runtime(format!("formatting {name}: {e}"));
        w.write_record(&table.header).map_err(err)?;
        for row in &table.rows {
            w.write_record(row).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Runtime(format!("formatting {name}: {e}")))?;
        self.write_bytes(name, &bytes)
    }

    /// Config echo plus run metadata. The echo is a complete config that
    /// reproduces the run when passed back with `--config`.
    pub fn write_provenance(&self, command: &str, cfg: &RunConfig) -> Result<(), CliError> {
        self.write_bytes("config.toml", cfg.to_toml().as_bytes())?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let meta = Metadata {
            command,
            version: env!("CARGO_PKG_VERSION"),
            created_unix: created,
            threads: rayon::current_num_threads(),
            config: cfg,
        };
        self.write_json("metadata.json", &meta)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    created_unix: u64,
    threads: usize,
    config: &'a RunConfig,
}

/// Rows of preformatted CSV fields.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Like [`num`], with an empty field for missing values.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
