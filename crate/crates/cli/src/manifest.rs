use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hybridseg::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TOOL: &str = "hybridseg";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let data = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(FileDigest {
        path: path.display().to_string(),
        bytes: data.len() as u64,
        sha256: format!("{:x}", Sha256::digest(&data)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: serde_json::Value,
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    write_file(path, text + "\n")
}

/// Tracks the files of one command run and emits the manifest at the end.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    out: PathBuf,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(command: &str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
        Ok(Self {
            command: command.to_string(),
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest_file(path)?);
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name);
        write_file(&p, bytes)?;
        self.outputs.push(p.clone());
        Ok(p)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("serialisable");
        self.write(name, text + "\n")
    }

    /// Records a file some library routine already wrote.
    pub fn wrote(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    /// Writes the resolved config and the manifest. Inputs are re-hashed so
    /// a run that modified one of them fails loudly.
    pub fn finish(mut self, cfg: &RunConfig, summary: serde_json::Value) -> Result<Manifest> {
        for d in &self.inputs {
            let now = digest_file(Path::new(&d.path))?;
            if now.sha256 != d.sha256 {
                return Err(Error::InvalidInput(format!("input {} changed during the run", d.path)));
            }
        }
        let resolved = self.path(RESOLVED_CONFIG_FILE);
        write_file(&resolved, cfg.to_text())?;
        self.outputs.push(resolved);
        let outputs = self
            .outputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            config: cfg.to_map().clone(),
            seed: cfg.get("seed")?,
            inputs: std::mem::take(&mut self.inputs),
            outputs,
            summary,
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
