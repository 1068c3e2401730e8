use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::OutputError;

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Record of one run. Contains no timestamps so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub inputs: Vec<InputFile>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Owns the output directory of one run and keeps the manifest in step with
/// every file written there.
pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    pub fn new(subcommand: &str, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| OutputError(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: env!("CARGO_BIN_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                subcommand: subcommand.to_string(),
                inputs: Vec::new(),
                parameters: BTreeMap::new(),
                outputs: Vec::new(),
            },
        })
    }

    /// Reads an input file, records its hash, and returns its bytes.
    pub fn input(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| colloc_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.manifest.inputs.push(InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("parameters serialize");
        self.manifest.parameters.insert(key.to_string(), value);
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| OutputError(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).context("serializing output")?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.outputs.push(MANIFEST_FILE.to_string());
        let mut text = serde_json::to_string_pretty(&self.manifest).context("serializing manifest")?;
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| OutputError(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
