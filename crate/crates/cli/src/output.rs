//! Output directory handling and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Random stream family used by a run: trial `i` draws from stream
/// `first_stream_id + i` under the master seed.
#[derive(Debug, Clone, Serialize)]
pub struct StreamInfo {
    pub name: String,
    pub namespace_id: u64,
    pub first_stream_id: u64,
    pub count: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub seed: u64,
    pub workers: usize,
    pub config: &'a ExperimentConfig,
    pub streams: &'a [StreamInfo],
    pub wall_time_seconds: f64,
    pub outputs: &'a [OutputFile],
}

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
    streams: Vec<StreamInfo>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            streams: Vec::new(),
        })
    }

    fn record(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            file: name.into(),
            bytes: bytes.len(),
            sha256: Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.record(name, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.record(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.record(name, &bytes)
    }

    pub fn stream(&mut self, streams: &rwis::rng::Streams, name: &str, count: usize) {
        self.streams.push(StreamInfo {
            name: name.into(),
            namespace_id: streams.namespace(),
            first_stream_id: streams.stream_id(0),
            count,
        });
    }

    pub fn finish(
        self,
        subcommand: &str,
        config: &ExperimentConfig,
        workers: usize,
        wall_time_seconds: f64,
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            tool: "rwis",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed: config.seed,
            workers,
            config,
            streams: &self.streams,
            wall_time_seconds,
            outputs: &self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}
