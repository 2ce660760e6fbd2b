//! The run manifest: every command leaves a `manifest.json` beside its
//! outputs recording the command, the fully resolved configuration, the
//! seed and stream ids, start and end timestamps, and a SHA-256 digest of
//! each output file. A manifest plus the binary version reproduces the
//! run; the timestamps are the only non-reproducible bytes, and they live
//! only here.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a serde_json::Value,
    seed: Option<u64>,
    stream_ids: &'a [u64],
    started_at: String,
    finished_at: String,
    outputs: &'a [OutputRecord],
    diagnostics: &'a serde_json::Map<String, serde_json::Value>,
}

#[derive(Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    stream_ids: Vec<u64>,
    started_at: DateTime<Utc>,
    outputs: Vec<OutputRecord>,
    diagnostics: serde_json::Map<String, serde_json::Value>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: impl Serialize) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed: None,
            stream_ids: Vec::new(),
            started_at: Utc::now(),
            outputs: Vec::new(),
            diagnostics: serde_json::Map::new(),
        }
    }

    pub fn seed(&mut self, seed: u64, stream_ids: impl IntoIterator<Item = u64>) {
        self.seed = Some(seed);
        self.stream_ids = stream_ids.into_iter().collect();
    }

    /// Extends the resolved configuration beyond the raw flags (e.g. the
    /// parsed noise law).
    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        self.config
            .as_object_mut()
            .expect("config is an object")
            .insert(
                key.to_string(),
                serde_json::to_value(value).expect("value serializes"),
            );
    }

    pub fn diagnostic(&mut self, key: &str, value: impl Serialize) {
        self.diagnostics.insert(
            key.to_string(),
            serde_json::to_value(value).expect("value serializes"),
        );
    }

    /// Digests an already-written output file into the manifest.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<(), CliError> {
        let mut hasher = Sha256::new();
        let mut reader = BufReader::new(File::open(dir.join(name))?);
        let mut buf = [0u8; 64 * 1024];
        let mut bytes = 0u64;
        loop {
            let n = reader.read(&mut buf)?;
            if n == 0 {
                break;
            }
            bytes += n as u64;
            hasher.update(&buf[..n]);
        }
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            sha256: hex(&hasher.finalize()),
            bytes,
        });
        Ok(())
    }

    pub fn write(self, dir: &Path) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            seed: self.seed,
            stream_ids: &self.stream_ids,
            started_at: self
                .started_at
                .to_rfc3339_opts(SecondsFormat::Micros, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
            outputs: &self.outputs,
            diagnostics: &self.diagnostics,
        };
        let path = dir.join("manifest.json");
        let mut file = File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, &manifest).map_err(std::io::Error::from)?;
        writeln!(file)?;
        Ok(path)
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Writes a value as pretty JSON with a trailing newline.
pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut file = File::create(dir.join(name))?;
    serde_json::to_writer_pretty(&mut file, value).map_err(std::io::Error::from)?;
    writeln!(file)?;
    Ok(())
}
