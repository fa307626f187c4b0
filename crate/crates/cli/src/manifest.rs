//! Run manifests: canonical flag sets and output digests, so any run can be
//! replayed and compared byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved flag list, excluding the output directory.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub timestamp_unix: u64,
    pub version: String,
    /// File name to sha256 hex digest, sorted by name.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, seed: Option<u64>) -> Self {
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            command: command.to_string(),
            args,
            seed,
            timestamp_unix,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-then-rename so readers never observe a half-written file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// A sink that both buffers output files and fills the manifest digests.
pub struct OutputSet {
    dir: PathBuf,
    pub manifest: RunManifest,
}

impl OutputSet {
    pub fn new(dir: &Path, command: &str, args: Vec<String>, seed: Option<u64>) -> Self {
        OutputSet {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(command, args, seed),
        }
    }

    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        self.manifest.record(name, bytes);
        write_atomic(&self.dir, name, bytes)?;
        Ok(())
    }

    /// Write the manifest itself; call last.
    pub fn finish(self) -> std::io::Result<RunManifest> {
        let mut text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        text.push('\n');
        write_atomic(&self.dir, "manifest.json", text.as_bytes())?;
        Ok(self.manifest)
    }
}
