//! Run manifests: what ran, with which resolved flags, on which files.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fabry_core::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Resolved flags; `fabry <command> --config <manifest>` replays them.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let mut f = File::open(path).with_context(|| format!("hashing {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
        total += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex(&h.finalize()),
        bytes: total,
    })
}

/// `dir/x.json` -> `dir/x.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

/// Collects inputs and outputs while a command runs.
pub struct Recorder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started_unix_secs: u64,
    clock: Instant,
}

impl Recorder {
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            clock: Instant::now(),
        })
    }

    /// sha256 of the resolved flags.
    pub fn config_sha256(&self) -> String {
        sha256_bytes(self.config.to_string().as_bytes())
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Hashes every recorded file and writes the manifest to `path`.
    pub fn finish(self, path: &Path) -> Result<RunManifest> {
        let digest_all = |ps: &[PathBuf]| ps.iter().map(|p| digest_file(p)).collect::<Result<Vec<_>>>();
        let m = RunManifest {
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seed: self.seed,
            inputs: digest_all(&self.inputs)?,
            outputs: digest_all(&self.outputs)?,
            started_unix_secs: self.started_unix_secs,
            wall_clock_secs: self.clock.elapsed().as_secs_f64(),
        };
        write_atomic(path, &serde_json::to_vec_pretty(&m)?)?;
        Ok(m)
    }
}
