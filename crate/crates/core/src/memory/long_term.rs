use std::collections::VecDeque;

use super::{EntryKind, MemoryEntry};
use crate::error::{Error, Result};

/// Permanent initial entry followed by a bounded FIFO.
#[derive(Debug, Clone)]
pub struct LongTermBank {
    initial: MemoryEntry,
    queue: VecDeque<MemoryEntry>,
    queue_capacity: usize,
}

impl LongTermBank {
    pub fn new(initial: MemoryEntry, queue_capacity: usize) -> Self {
        LongTermBank {
            initial: initial.with_kind(EntryKind::Initial),
            queue: VecDeque::with_capacity(queue_capacity + 1),
            queue_capacity,
        }
    }

    pub fn initial(&self) -> &MemoryEntry {
        &self.initial
    }

    pub fn queue(&self) -> &VecDeque<MemoryEntry> {
        &self.queue
    }

    pub fn queue_capacity(&self) -> usize {
        self.queue_capacity
    }

    /// Initial entry plus queued entries.
    pub fn len(&self) -> usize {
        1 + self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Newest queued entry, or the initial entry when the queue is empty.
    pub fn latest(&self) -> &MemoryEntry {
        self.queue.back().unwrap_or(&self.initial)
    }

    pub fn push(&mut self, entry: MemoryEntry) -> Result<()> {
        let newest = self.latest().frame;
        if entry.frame <= newest {
            return Err(Error::OutOfOrder { previous: newest, got: entry.frame });
        }
        self.queue.push_back(entry.with_kind(EntryKind::LongTerm));
        while self.queue.len() > self.queue_capacity {
            self.queue.pop_front();
        }
        Ok(())
    }

    /// Entries oldest first, initial leading.
    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        std::iter::once(&self.initial).chain(self.queue.iter())
    }
}
