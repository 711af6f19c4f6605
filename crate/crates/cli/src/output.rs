//! Result files: CSV tables tagged with the config hash, and a manifest.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::Failure;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::io(format!("{}: {e}", path.display()))
}

pub struct Output {
    dir: PathBuf,
    command: String,
    hash: String,
    config: Value,
    files: Vec<String>,
    started: Instant,
}

/// A CSV table; every row gets a trailing `config_hash` cell.
pub struct Table {
    writer: csv::Writer<File>,
    path: PathBuf,
    hash: String,
}

impl Table {
    pub fn row<I, S>(&mut self, cells: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut record: Vec<String> = cells.into_iter().map(|c| c.as_ref().to_owned()).collect();
        record.push(self.hash.clone());
        self.writer.write_record(&record).map_err(|e| io_err(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.writer.flush().map_err(|e| io_err(&self.path, e))
    }
}

impl Output {
    pub fn create(dir: PathBuf, command: &str, hash: String, config: Value) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            command: command.to_owned(),
            hash,
            config,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn table(&mut self, name: &str, header: &[&str]) -> Result<Table, Failure> {
        let path = self.dir.join(name);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        let mut cols: Vec<&str> = header.to_vec();
        cols.push("config_hash");
        writer.write_record(&cols).map_err(|e| io_err(&path, e))?;
        self.files.push(name.to_owned());
        Ok(Table {
            writer,
            path,
            hash: self.hash.clone(),
        })
    }

    /// Path for a non-tabular output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_owned());
        self.dir.join(name)
    }

    /// Writes `manifest.json`; `extra` holds command-specific seed records.
    pub fn finish(self, extra: Map<String, Value>) -> Result<(), Failure> {
        let mut manifest = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.hash,
            "config": self.config,
            "seed_scheme": "ChaCha8 seeded with splitmix64(splitmix64(splitmix64(master) ^ task) ^ index)",
            "outputs": self.files,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        });
        manifest.as_object_mut().expect("object").extend(extra);
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("json values serialize");
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
