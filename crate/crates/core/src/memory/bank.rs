use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{CandidatePool, EntryKind, LongTermBank, MemoryEntry};
use crate::config::{MemoryPolicy, TrackerConfig};
use crate::error::{Error, Result};
use crate::types::{FrameIndex, ScoreReport};

/// What one [`MemoryBank::update`] did besides the short-term push.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    pub pooled: bool,
    pub promoted: Option<FrameIndex>,
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    policy: MemoryPolicy,
    gamma_iou: f64,
    interval_every: u64,
    short_capacity: usize,
    short_term: VecDeque<MemoryEntry>,
    long_term: LongTermBank,
    pool: CandidatePool,
    last_frame: FrameIndex,
}

impl MemoryBank {
    /// Starts a bank whose permanent member is the tracking reference frame.
    pub fn new(initial: &ScoreReport, config: &TrackerConfig) -> Result<Self> {
        config.validate()?;
        let initial = MemoryEntry::from_report(initial, EntryKind::Initial)?;
        let last_frame = initial.frame;
        let short_capacity = config.effective_short_capacity();
        Ok(MemoryBank {
            policy: config.policy,
            gamma_iou: config.gamma_iou,
            interval_every: config.interval_every,
            short_capacity,
            short_term: VecDeque::with_capacity(short_capacity + 1),
            long_term: LongTermBank::new(initial, config.long_queue_capacity()),
            pool: CandidatePool::new(config.n_p)?,
            last_frame,
        })
    }

    pub fn policy(&self) -> MemoryPolicy {
        self.policy
    }

    pub fn short_term(&self) -> &VecDeque<MemoryEntry> {
        &self.short_term
    }

    pub fn short_capacity(&self) -> usize {
        self.short_capacity
    }

    pub fn long_term(&self) -> &LongTermBank {
        &self.long_term
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn initial(&self) -> &MemoryEntry {
        self.long_term.initial()
    }

    /// Folds one tracking-stage prediction into the bank.
    pub fn update(&mut self, report: &ScoreReport) -> Result<UpdateOutcome> {
        if report.frame <= self.last_frame {
            return Err(Error::OutOfOrder { previous: self.last_frame, got: report.frame });
        }
        let entry = MemoryEntry::from_report(report, EntryKind::ShortTerm)?;
        self.last_frame = report.frame;

        let mut outcome = UpdateOutcome::default();
        match self.policy {
            MemoryPolicy::Vanilla | MemoryPolicy::Extended => {}
            MemoryPolicy::Interval => {
                if report.frame.since(self.initial().frame) % self.interval_every == 0 {
                    self.long_term.push(entry.clone())?;
                    outcome.promoted = Some(report.frame);
                }
            }
            MemoryPolicy::Dlm => {
                outcome.pooled = self.pool.offer(entry.clone(), self.gamma_iou)?;
                if self.pool.is_full() {
                    let selected = self.pool.select_diverse(self.long_term.latest())?;
                    outcome.promoted = Some(selected.frame);
                    self.long_term.push(selected)?;
                }
            }
        }

        self.short_term.push_back(entry);
        while self.short_term.len() > self.short_capacity {
            self.short_term.pop_front();
        }
        Ok(outcome)
    }

    /// Conditioning set: initial, long-term oldest to newest, then short-term
    /// oldest to newest. A frame held by both banks appears once.
    pub fn assemble_context(&self) -> Vec<&MemoryEntry> {
        let mut out: Vec<&MemoryEntry> = Vec::with_capacity(self.long_term.len() + self.short_term.len());
        for entry in self.long_term.iter().chain(self.short_term.iter()) {
            if !out.iter().any(|e| e.frame == entry.frame) {
                out.push(entry);
            }
        }
        out
    }

    /// Oldest non-initial frame currently conditioning the tracker.
    pub fn oldest_non_initial(&self) -> Option<FrameIndex> {
        let long = self.long_term.queue().front().map(|e| e.frame);
        let short = self.short_term.front().map(|e| e.frame);
        match (long, short) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// How many frames back, from the next frame to be predicted, the oldest
    /// non-initial memory reaches. Zero when only the initial entry is held.
    pub fn span(&self) -> u64 {
        self.oldest_non_initial().map_or(0, |oldest| self.last_frame.next().since(oldest))
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            entries: self
                .assemble_context()
                .into_iter()
                .map(|e| SnapshotEntry {
                    frame: e.frame,
                    kind: e.kind,
                    iou_score: e.iou_score,
                    embedding_hash: e.embedding_hash(),
                })
                .collect(),
            pool_frames: self.pool.entries().iter().map(|e| e.frame).collect(),
        }
    }
}

/// Serializable summary of an assembled context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub entries: Vec<SnapshotEntry>,
    pub pool_frames: Vec<FrameIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub frame: FrameIndex,
    pub kind: EntryKind,
    pub iou_score: f64,
    pub embedding_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Embedding, MaskGrid};

    fn report(frame: u64, iou: f64) -> ScoreReport {
        let e = Embedding::new(vec![1.0, 0.5]).unwrap();
        ScoreReport::new(FrameIndex(frame), iou, 5.0, Some(e), MaskGrid::empty(1, 1)).unwrap()
    }

    fn bank(policy: MemoryPolicy) -> MemoryBank {
        MemoryBank::new(&report(0, 0.9), &TrackerConfig::default().with_policy(policy)).unwrap()
    }

    fn frames(bank: &MemoryBank) -> Vec<u64> {
        bank.assemble_context().iter().map(|e| e.frame.0).collect()
    }

    #[test]
    fn fresh_bank_context_is_initial_only() {
        let b = bank(MemoryPolicy::Dlm);
        assert_eq!(frames(&b), vec![0]);
        assert_eq!(b.span(), 0);
    }

    #[test]
    fn dlm_promotes_every_pool_fill() {
        let mut b = bank(MemoryPolicy::Dlm);
        let mut promotions = Vec::new();
        for f in 1..=20 {
            if let Some(p) = b.update(&report(f, 0.99)).unwrap().promoted {
                promotions.push((f, p.0));
            }
        }
        // identical embeddings: every selection is a tie, earliest pool member wins
        assert_eq!(promotions, vec![(5, 1), (10, 6), (15, 11), (20, 16)]);
        assert_eq!(b.long_term().len(), 4);
        assert!(b.pool().is_empty());
    }

    #[test]
    fn dlm_never_promotes_low_confidence() {
        let mut b = bank(MemoryPolicy::Dlm);
        for f in 1..=100 {
            b.update(&report(f, 0.5)).unwrap();
        }
        assert_eq!(b.long_term().len(), 1);
    }

    #[test]
    fn interval_keeps_last_three_samples() {
        let mut b = bank(MemoryPolicy::Interval);
        for f in 1..=15 {
            b.update(&report(f, 0.5)).unwrap();
        }
        let long: Vec<u64> = b.long_term().iter().map(|e| e.frame.0).collect();
        assert_eq!(long, vec![0, 5, 10, 15]);
    }

    #[test]
    fn vanilla_and_extended_short_capacities() {
        let mut v = bank(MemoryPolicy::Vanilla);
        let mut x = bank(MemoryPolicy::Extended);
        for f in 1..=30 {
            v.update(&report(f, 0.99)).unwrap();
            x.update(&report(f, 0.99)).unwrap();
        }
        assert_eq!(frames(&v), vec![0, 25, 26, 27, 28, 29, 30]);
        assert_eq!(v.span(), 6);
        assert_eq!(x.short_term().len(), 10);
        assert_eq!(x.long_term().len(), 1);
    }

    #[test]
    fn context_order_and_dedup() {
        let mut b = bank(MemoryPolicy::Interval);
        for f in 1..=12 {
            b.update(&report(f, 0.5)).unwrap();
        }
        // long {5, 10}, short {7..=12}: frame 10 appears once
        assert_eq!(frames(&b), vec![0, 5, 10, 7, 8, 9, 11, 12]);
    }

    #[test]
    fn update_errors() {
        let mut b = bank(MemoryPolicy::Dlm);
        b.update(&report(3, 0.99)).unwrap();
        assert!(matches!(b.update(&report(3, 0.99)), Err(Error::OutOfOrder { .. })));
        let no_emb = ScoreReport::new(FrameIndex(4), 0.99, 1.0, None, MaskGrid::empty(1, 1)).unwrap();
        assert!(matches!(b.update(&no_emb), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn snapshot_serializes() {
        let mut b = bank(MemoryPolicy::Dlm);
        b.update(&report(1, 0.99)).unwrap();
        let json = serde_json::to_string(&b.snapshot()).unwrap();
        assert!(json.contains(r#""kind":"initial""#));
        assert!(json.contains(r#""pool_frames":[1]"#));
    }
}
