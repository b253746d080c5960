use std::path::{Path, PathBuf};

use super::TextBackend;
use crate::fsutil::sha256_hex;
use crate::{Error, Result};

/// Replays canned completions from a directory. The response for an
/// instruction lives in `<first 16 hex chars of SHA-256(instruction)>.txt`.
#[derive(Clone, Debug)]
pub struct FixtureTextBackend {
    dir: PathBuf,
}

impl FixtureTextBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTextBackend { dir: dir.into() }
    }

    pub fn key(instruction: &str) -> String {
        sha256_hex(instruction.as_bytes())[..16].to_string()
    }

    pub fn path_for(&self, instruction: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", Self::key(instruction)))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl TextBackend for FixtureTextBackend {
    fn complete(&self, instruction: &str) -> Result<String> {
        let path = self.path_for(instruction);
        if !path.is_file() {
            return Err(Error::Protocol(format!(
                "no fixture response for instruction {:?} (expected {})",
                instruction,
                path.display()
            )));
        }
        std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }
}
