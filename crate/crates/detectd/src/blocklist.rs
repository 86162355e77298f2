//! Operator-maintained set of blocked source identifiers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SOURCE_LEN: usize = 256;

#[derive(Debug, Error)]
pub enum BlockListError {
    #[error("source must be 1 to {MAX_SOURCE_LEN} bytes")]
    InvalidSource,
    #[error("blocklist i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("blocklist file is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub source: String,
    /// Unix seconds.
    pub added_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockList {
    entries: BTreeMap<String, u64>,
}

pub fn validate_source(source: &str) -> Result<(), BlockListError> {
    if source.is_empty() || source.len() > MAX_SOURCE_LEN {
        return Err(BlockListError::InvalidSource);
    }
    Ok(())
}

impl BlockList {
    pub fn contains(&self, source: &str) -> bool {
        self.entries.contains_key(source)
    }

    /// Returns false (keeping the original timestamp) if already present.
    pub fn insert(&mut self, source: &str, now: u64) -> bool {
        if self.entries.contains_key(source) {
            return false;
        }
        self.entries.insert(source.to_string(), now);
        true
    }

    pub fn remove(&mut self, source: &str) -> bool {
        self.entries.remove(source).is_some()
    }

    pub fn get(&self, source: &str) -> Option<BlockEntry> {
        self.entries.get(source).map(|&t| BlockEntry {
            source: source.to_string(),
            added_at: t,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries ordered by source.
    pub fn entries(&self) -> Vec<BlockEntry> {
        self.entries
            .iter()
            .map(|(s, &t)| BlockEntry {
                source: s.clone(),
                added_at: t,
            })
            .collect()
    }

    /// A missing file is an empty list.
    pub fn load(path: &Path) -> Result<Self, BlockListError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(e.into()),
        };
        let list: Vec<BlockEntry> = serde_json::from_str(&text)?;
        let mut out = Self::default();
        for e in list {
            validate_source(&e.source)?;
            out.insert(&e.source, e.added_at);
        }
        Ok(out)
    }

    /// Write to a temporary sibling, sync, then rename over `path`.
    pub fn save(&self, path: &Path) -> Result<(), BlockListError> {
        let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        let mut body = serde_json::to_vec_pretty(&self.entries())?;
        body.push(b'\n');
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}
