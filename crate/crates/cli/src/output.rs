use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Writes experiment artifacts under one directory and records a content hash for each.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[OutputFile] {
        &self.files
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.push(OutputFile { path: rel.to_string(), bytes: bytes.len(), sha256: format!("{:x}", Sha256::digest(bytes)) });
        Ok(())
    }

    /// Buffers whatever `f` writes, then stores it as `rel`.
    pub fn write_with<E>(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<(), E>
    where
        E: From<std::io::Error>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    /// Like `write_json` but not listed among the outputs (used for the manifest itself).
    pub fn write_json_untracked<T: Serialize>(&self, rel: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(rel), text)
    }

    /// RFC 4180 table from a header and rows of numbers.
    pub fn write_table(&mut self, rel: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(std::io::Error::other)?;
        for r in rows {
            w.write_record(&r).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        self.write(rel, &bytes)
    }
}
