//! Generation manifest: JSONL, one [`ManifestEntry`] per line.
//!
//! While a run is in progress entries are appended by a single writer; a later
//! line for the same index supersedes an earlier one. When the run ends the
//! file is compacted (one line per index, sorted) through a temp file and a
//! rename. A torn final line from an interrupted append is ignored on load.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fsutil::{self, sha256_hex};
use crate::planner::Bucket;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Done,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<Bucket>,
    pub prompt: String,
    pub seed: u64,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    pub status: EntryStatus,
    /// Hash of the job set (plan) this entry belongs to.
    pub plan_hash: String,
}

impl ManifestEntry {
    pub fn is_done(&self) -> bool {
        self.status == EntryStatus::Done
    }

    /// Done, and the image on disk still hashes to `content_hash`.
    pub fn is_verified(&self) -> bool {
        if !self.is_done() {
            return false;
        }
        let Some(expected) = &self.content_hash else {
            return false;
        };
        std::fs::read(&self.image_path).is_ok_and(|bytes| &sha256_hex(&bytes) == expected)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: BTreeMap<usize, ManifestEntry>,
}

impl Manifest {
    /// Loads a manifest; a missing file is an empty manifest.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut entries = BTreeMap::new();
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<ManifestEntry>(line) {
                Ok(entry) => {
                    entries.insert(entry.index, entry);
                }
                Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: ignoring torn final line: {e}", path.display());
                }
                Err(e) => return Err(Error::json(format!("{} line {}", path.display(), i + 1), e)),
            }
        }
        Ok(Manifest { entries })
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let rows: Vec<&ManifestEntry> = self.entries.values().collect();
        fsutil::to_jsonl(&rows)
    }

    /// Rewrites the file with one sorted line per index, atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn done(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.values().filter(|e| e.is_done())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Sole writer of a manifest file during a run.
pub(crate) struct ManifestAppender {
    path: PathBuf,
    file: File,
}

impl ManifestAppender {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        // drop a torn tail left by an interrupted append
        if let Ok(bytes) = std::fs::read(path) {
            if !bytes.is_empty() && !bytes.ends_with(b"\n") {
                let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ManifestAppender {
            path: path.to_path_buf(),
            file,
        })
    }

    pub(crate) fn append(&mut self, entry: &ManifestEntry) -> Result<()> {
        let mut line = serde_json::to_string(entry).map_err(|e| Error::json("serializing manifest entry", e))?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}
