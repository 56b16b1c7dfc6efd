//! Append-only JSON-lines journal. Each record is flushed to disk before the
//! state change it describes becomes visible.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use pgs_core::broker::{EnvelopeMeta, ShareEnvelope};
use pgs_core::protocol::{Mutation, TransactionId};
use serde::{Deserialize, Serialize};

use crate::service::ReconstructionRecord;

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum JournalRecord {
    Envelope { meta: EnvelopeMeta, payload: String },
    Mutation { mutation: Mutation },
    Reconstruction { record: ReconstructionRecord },
    TamperFlag { transaction: TransactionId, detail: String },
}

impl JournalRecord {
    pub fn envelope(e: &ShareEnvelope) -> Self {
        JournalRecord::Envelope {
            meta: e.meta().clone(),
            payload: B64.encode(e.payload()),
        }
    }

    pub fn decode_envelope(meta: EnvelopeMeta, payload: &str) -> std::io::Result<ShareEnvelope> {
        let bytes = B64
            .decode(payload)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(ShareEnvelope::from_parts(meta, bytes))
    }
}

pub struct Journal {
    path: Option<PathBuf>,
    file: Option<File>,
}

impl Journal {
    pub fn in_memory() -> Self {
        Self { path: None, file: None }
    }

    /// Opens (creating if needed) the journal in `dir` and returns it with
    /// every complete record already on disk. A torn final line, left by a
    /// crash mid-append, is dropped and truncated away.
    pub fn open(dir: &Path) -> std::io::Result<(Self, Vec<JournalRecord>)> {
        fs::create_dir_all(dir)?;
        let path = dir.join(JOURNAL_FILE);
        let mut records = Vec::new();
        let mut good_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            let mut lines = reader.split(b'\n').peekable();
            while let Some(line) = lines.next() {
                let line = line?;
                let last = lines.peek().is_none();
                match serde_json::from_slice::<JournalRecord>(&line) {
                    Ok(r) => {
                        records.push(r);
                        good_len += line.len() as u64 + 1;
                    }
                    Err(_) if last => break,
                    Err(_) if line.iter().all(u8::is_ascii_whitespace) => {
                        good_len += line.len() as u64 + 1;
                    }
                    Err(e) => return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, e)),
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        let len = file.metadata()?.len();
        if len > good_len {
            file.set_len(good_len)?;
        } else if len + 1 == good_len {
            // last record made it but its newline did not
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        Ok((
            Self {
                path: Some(path),
                file: Some(file),
            },
            records,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&mut self, record: &JournalRecord) -> std::io::Result<()> {
        let Some(file) = self.file.as_mut() else {
            return Ok(());
        };
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()
    }
}
