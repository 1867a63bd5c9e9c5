use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use featdistill::embedstore::{checksum_hex, fnv1a64, EmbeddingSet};
use featdistill::Error;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliResult;

pub const REPORT_FILE: &str = "report.json";
pub const RUN_FILE: &str = "run.json";

/// A file or embedding set consumed or produced by a run. Set checksums are
/// those of their `emb.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: String,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    pub duration_ms: u64,
}

/// Collects records while a subcommand runs and writes `run.json` at the end.
pub struct Run {
    out: PathBuf,
    subcommand: &'static str,
    started: Instant,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Run {
    pub fn start(out: &Path, subcommand: &'static str) -> Self {
        Self {
            out: out.to_path_buf(),
            subcommand,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input_file(&mut self, role: &str, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(record(role, path.display().to_string(), fnv1a64(&bytes)));
        Ok(bytes)
    }

    pub fn input_set(&mut self, role: &str, path: &Path, set: &EmbeddingSet) {
        self.inputs.push(record(role, path.display().to_string(), set.checksum()));
    }

    /// Writes `bytes` to `name` inside the output directory, creating it on
    /// first use.
    pub fn output_file(&mut self, role: &str, name: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(&self.path(name), bytes)?;
        self.outputs.push(record(role, name.to_string(), fnv1a64(bytes)));
        Ok(())
    }

    pub fn output_json<T: Serialize>(&mut self, role: &str, name: &str, value: &T) -> CliResult<()> {
        self.output_file(role, name, &json_bytes(value))
    }

    pub fn output_set(&mut self, role: &str, name: &str, set: &EmbeddingSet) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        featdistill::embedstore::write_embedding_set(set, self.path(name))?;
        self.outputs.push(record(role, name.to_string(), set.checksum()));
        Ok(())
    }

    pub fn finish<C: Serialize>(self, config: &C, seed: u64) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            tool: "featdistill".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: self.subcommand.into(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_ms: self.started.elapsed().as_millis() as u64,
        };
        write_atomic(&self.out.join(RUN_FILE), &json_bytes(&manifest))?;
        Ok(manifest)
    }
}

fn record(role: &str, path: String, checksum: u64) -> FileRecord {
    FileRecord {
        role: role.into(),
        path,
        checksum: checksum_hex(checksum),
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report serializes");
    v.push(b'\n');
    v
}

/// Writes through a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e).into()
    })
}
