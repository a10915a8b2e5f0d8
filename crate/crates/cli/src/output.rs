//! Output files: written to a temporary file in the target directory and
//! renamed into place, so a reader never sees a partial artifact.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, CliError> {
        let root = root.into();
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Atomically write `name` and return its checksum record.
    pub fn write(&self, name: &str, contents: &[u8]) -> Result<FileRecord, CliError> {
        let target = self.root.join(name);
        let io_err = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", target.display()));
        let mut tmp = tempfile::Builder::new()
            .prefix(&format!(".{name}."))
            .suffix(".tmp")
            .tempfile_in(&self.root)
            .map_err(io_err)?;
        tmp.write_all(contents).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&target).map_err(|e| io_err(e.error))?;
        Ok(FileRecord { path: name.to_string(), bytes: contents.len() as u64, sha256: sha256_hex(contents) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_atomically_and_records_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path().join("nested/out")).unwrap();
        let rec = out.write("a.csv", b"x,y\n1,2\n").unwrap();
        assert_eq!(rec.bytes, 8);
        assert_eq!(std::fs::read(out.path().join("a.csv")).unwrap(), b"x,y\n1,2\n");
        // sha256 of the empty string
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        let leftovers: Vec<_> = std::fs::read_dir(out.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
        out.write("a.csv", b"new").unwrap();
        assert_eq!(std::fs::read(out.path().join("a.csv")).unwrap(), b"new");
    }
}
