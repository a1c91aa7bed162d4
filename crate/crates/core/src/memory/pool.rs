use super::{EntryKind, MemoryEntry};
use crate::error::{Error, Result};
use crate::types::cosine_similarity;

/// Confident frames waiting for a diversity selection.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    entries: Vec<MemoryEntry>,
    capacity: usize,
}

impl CandidatePool {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("candidate pool capacity must be at least 1".into()));
        }
        Ok(CandidatePool { entries: Vec::with_capacity(capacity), capacity })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Admits `entry` iff its IoU score strictly exceeds `gamma_iou`.
    /// Returns whether it was admitted.
    pub fn offer(&mut self, entry: MemoryEntry, gamma_iou: f64) -> Result<bool> {
        if self.is_full() {
            return Err(Error::PoolFull(self.capacity));
        }
        if let Some(last) = self.entries.last() {
            if entry.frame <= last.frame {
                return Err(Error::OutOfOrder { previous: last.frame, got: entry.frame });
            }
        }
        if entry.iou_score > gamma_iou {
            self.entries.push(entry);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Removes and returns the candidate with the lowest cosine similarity to
    /// `latest_long`; equal similarities resolve to the earliest frame. The
    /// pool is left empty.
    pub fn select_diverse(&mut self, latest_long: &MemoryEntry) -> Result<MemoryEntry> {
        if !self.is_full() {
            return Err(Error::PoolNotFull { len: self.entries.len(), capacity: self.capacity });
        }
        let mut best = 0;
        let mut best_sim = f64::INFINITY;
        for (i, candidate) in self.entries.iter().enumerate() {
            let sim = cosine_similarity(&candidate.embedding, &latest_long.embedding)?;
            if sim < best_sim {
                best = i;
                best_sim = sim;
            }
        }
        let selected = self.entries.swap_remove(best);
        self.entries.clear();
        Ok(selected.with_kind(EntryKind::LongTerm))
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
