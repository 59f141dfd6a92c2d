use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Record of one invocation, written as `manifest.json` in the output
/// directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub command: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output paths collected while a command runs, relative to the output
/// directory.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf(), files: Vec::new() }
    }

    /// Absolute path for `name`, registered as an output.
    pub fn file(&mut self, name: &str) -> PathBuf {
        let rel = PathBuf::from(name);
        if !self.files.contains(&rel) {
            self.files.push(rel);
        }
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn into_files(self) -> Vec<PathBuf> {
        self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn outputs_are_registered_once() {
        let mut o = Outputs::new(Path::new("/tmp/x"));
        assert_eq!(o.file("a.csv"), PathBuf::from("/tmp/x/a.csv"));
        o.file("a.csv");
        o.file("b.json");
        assert_eq!(o.into_files(), vec![PathBuf::from("a.csv"), PathBuf::from("b.json")]);
    }
}
