//! Output files: fixed-precision numbers, atomic writes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use disparity::data::format_number;
use disparity::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// CSV cell for an optional number: 17 significant digits, empty when
/// absent or not finite.
pub fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format_number(v),
        _ => String::new(),
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl InputFile {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        })
    }
}

/// Everything needed to re-derive a command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Seconds since the epoch from `SOURCE_DATE_EPOCH`; absent otherwise so
    /// that reruns stay byte-identical.
    pub timestamp: Option<u64>,
    pub inputs: Vec<InputFile>,
    pub seed: u64,
    pub bootstrap: usize,
    pub options: serde_json::Value,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, bootstrap: usize, options: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::env::var("SOURCE_DATE_EPOCH")
                .ok()
                .and_then(|s| s.trim().parse().ok()),
            inputs: Vec::new(),
            seed,
            bootstrap,
            options,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile::read(path)?);
        Ok(())
    }

    /// Output path inside `dir`, recorded in the manifest.
    pub fn output(&mut self, dir: &Path, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        dir.join(name)
    }

    pub fn write(mut self, dir: &Path) -> Result<()> {
        let path = self.output(dir, "manifest.json");
        write_json(&path, &self)
    }
}
