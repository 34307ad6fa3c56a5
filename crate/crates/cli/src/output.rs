//! In-memory artifact staging and the run manifest.
//!
//! Nothing touches the output directory until a workflow has finished, so a
//! failed run leaves no partial files behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stages `name` (a relative path) with content produced by `fill`.
    pub fn add_with<F>(&mut self, name: impl Into<String>, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> forchgas_core::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }

    /// Writes every staged file under `dir`, then the manifest.
    pub fn commit(&self, dir: &Path, header: &ManifestHeader) -> Result<PathBuf, CliError> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, bytes)?;
        }
        fs::create_dir_all(dir)?;
        let manifest = dir.join(MANIFEST);
        fs::write(&manifest, self.manifest(header))?;
        Ok(manifest)
    }

    pub fn manifest(&self, header: &ManifestHeader) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "forchgas-manifest 1");
        let _ = writeln!(out, "command {}", header.command);
        let _ = writeln!(out, "cli_version {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "core_version {}", forchgas_core::VERSION);
        let _ = writeln!(out, "inputs_sha256 {}", header.inputs_sha256);
        match header.seed {
            Some(s) => writeln!(out, "seed {s}"),
            None => writeln!(out, "seed none"),
        }
        .expect("string write");
        for (name, bytes) in &self.files {
            let _ = writeln!(out, "file {} {} {}", sha256_hex(bytes), bytes.len(), name);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ManifestHeader {
    pub command: String,
    pub inputs_sha256: String,
    pub seed: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
