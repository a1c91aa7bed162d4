//! Memory-bank policies for the tracking stage.
//!
//! Every policy keeps the nearest-frame short-term queue. On top of that:
//! `Interval` samples frames at a fixed stride into a bounded long-term
//! queue, and `Dlm` admits only confident frames into a candidate pool and,
//! each time the pool fills, promotes the candidate least similar to the
//! newest long-term entry. The tracking reference frame is a permanent
//! long-term member under every policy.

mod bank;
mod long_term;
mod pool;

pub use bank::{MemoryBank, MemorySnapshot, SnapshotEntry, UpdateOutcome};
pub use long_term::LongTermBank;
pub use pool::CandidatePool;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Embedding, FrameIndex, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Initial,
    ShortTerm,
    LongTerm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub frame: FrameIndex,
    pub embedding: Embedding,
    pub iou_score: f64,
    pub kind: EntryKind,
}

impl MemoryEntry {
    pub fn new(frame: FrameIndex, embedding: Embedding, iou_score: f64, kind: EntryKind) -> Result<Self> {
        if embedding.norm() == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(MemoryEntry { frame, embedding, iou_score, kind })
    }

    pub fn from_report(report: &ScoreReport, kind: EntryKind) -> Result<Self> {
        let embedding = report.embedding.clone().ok_or(Error::MissingEmbedding(report.frame))?;
        MemoryEntry::new(report.frame, embedding, report.iou_score, kind)
    }

    pub fn with_kind(mut self, kind: EntryKind) -> Self {
        self.kind = kind;
        self
    }

    /// Short content hash of the embedding, hex encoded.
    pub fn embedding_hash(&self) -> String {
        let digest = Sha256::digest(self.embedding.to_le_bytes());
        hex::encode(&digest[..8])
    }
}
