//! Output files. Every file starts with the tool version and config hash:
//! a `#` comment line for CSV, `tool`/`version`/`config_hash` keys for JSON.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use rwre_core::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the CSV column layouts.
pub const CSV_SCHEMA: u32 = 1;

pub struct Sink {
    dir: PathBuf,
    hash: String,
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::param(format!("{}: {e}", path.display()))
}

impl Sink {
    pub fn new(dir: &Path, hash: &str) -> Result<Sink> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            hash: hash.to_string(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn header_line(&self) -> String {
        format!("# rwre {VERSION} csv-schema {CSV_SCHEMA} config-sha256 {}", self.hash)
    }

    /// `body` holds the column header and rows, newline-terminated.
    pub fn csv(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{}\n{body}", self.header_line())).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, report: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let doc = json!({
            "tool": "rwre",
            "version": VERSION,
            "config_hash": self.hash,
            "report": report,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::param(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
        Ok(path)
    }

    /// Writes a file verbatim (the resolved config itself).
    pub fn raw(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(path)
    }
}
