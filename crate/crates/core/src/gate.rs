//! Windowed initial-frame selection.
//!
//! The gate keeps the last `n_w` detection-stage reports. Once every one of
//! them is confidently present (IoU score and presence probability both over
//! their thresholds) it picks the window member with the highest IoU score as
//! the tracking reference and goes inert until [`GateState::reset`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::{GateMode, TrackerConfig};
use crate::error::{Error, Result};
use crate::types::{sigmoid, FrameIndex, ScoreReport};

/// Strict two-score qualification test for one frame.
pub fn qualifies(report: &ScoreReport, config: &TrackerConfig) -> bool {
    // ScoreReport construction guarantees a finite logit.
    let presence = sigmoid(report.occlusion_logit).unwrap_or(0.0);
    report.iou_score > config.delta_iou && presence > config.delta_o
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSelection {
    pub frame: FrameIndex,
    pub report: ScoreReport,
    pub decided_at: FrameIndex,
}

#[derive(Debug, Clone)]
struct WindowEntry {
    qualifies: bool,
    report: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct GateState {
    window_len: usize,
    window: VecDeque<WindowEntry>,
    last_frame: Option<FrameIndex>,
    inert: bool,
}

impl GateState {
    pub fn new(window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return Err(Error::InvalidConfig("gate window must hold at least one frame".into()));
        }
        Ok(GateState { window_len, window: VecDeque::with_capacity(window_len + 1), last_frame: None, inert: false })
    }

    /// Window of `n_w` frames for the windowed gate, a single frame for the first-detection ablation.
    pub fn for_config(config: &TrackerConfig) -> Result<Self> {
        match config.gate {
            GateMode::Windowed => GateState::new(config.n_w),
            GateMode::FirstDetection => GateState::new(1),
        }
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn is_inert(&self) -> bool {
        self.inert
    }

    /// Frames currently retained, oldest first.
    pub fn frames(&self) -> impl Iterator<Item = FrameIndex> + '_ {
        self.window.iter().map(|e| e.report.frame)
    }

    pub fn retained(&self, frame: FrameIndex) -> Option<&ScoreReport> {
        self.window.iter().map(|e| &e.report).find(|r| r.frame == frame)
    }

    pub fn observe(&mut self, report: ScoreReport, config: &TrackerConfig) -> Result<Option<InitialSelection>> {
        if self.inert {
            return Err(Error::GateInert);
        }
        if let Some(previous) = self.last_frame {
            if report.frame <= previous {
                return Err(Error::OutOfOrder { previous, got: report.frame });
            }
        }
        self.last_frame = Some(report.frame);
        let decided_at = report.frame;
        self.window.push_back(WindowEntry { qualifies: qualifies(&report, config), report });
        while self.window.len() > self.window_len {
            self.window.pop_front();
        }

        if self.window.len() < self.window_len || !self.window.iter().all(|e| e.qualifies) {
            return Ok(None);
        }
        let mut best = &self.window[0];
        for entry in self.window.iter().skip(1) {
            if entry.report.iou_score > best.report.iou_score {
                best = entry;
            }
        }
        let selection = InitialSelection { frame: best.report.frame, report: best.report.clone(), decided_at };
        self.inert = true;
        Ok(Some(selection))
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.last_frame = None;
        self.inert = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::MaskGrid;

    fn report(frame: u64, iou: f64, logit: f64) -> ScoreReport {
        ScoreReport::new(FrameIndex(frame), iou, logit, None, MaskGrid::empty(1, 1)).unwrap()
    }

    fn cfg() -> TrackerConfig {
        TrackerConfig::default()
    }

    #[test]
    fn qualification_examples() {
        // sigmoid(3) ≈ 0.9526, sigmoid(2) ≈ 0.8808
        assert!(qualifies(&report(0, 0.75, 3.0), &cfg()));
        assert!(!qualifies(&report(0, 0.7, 10.0), &cfg()));
        assert!(!qualifies(&report(0, 0.99, 2.0), &cfg()));
    }

    fn feed(gate: &mut GateState, ious: &[f64], logit: f64) -> Option<InitialSelection> {
        let mut out = None;
        for (i, &iou) in ious.iter().enumerate() {
            if let Some(sel) = gate.observe(report(i as u64, iou, logit), &cfg()).unwrap() {
                out = Some(sel);
            }
        }
        out
    }

    #[test]
    fn selects_max_iou_of_full_window() {
        let mut gate = GateState::new(5).unwrap();
        let sel = feed(&mut gate, &[0.8, 0.9, 0.85, 0.95, 0.88], 4.0).unwrap();
        assert_eq!(sel.decided_at, FrameIndex(4));
        assert_eq!(sel.frame, FrameIndex(3));
        assert_eq!(sel.report.iou_score, 0.95);
        assert!(gate.is_inert());
    }

    #[test]
    fn one_bad_frame_blocks_selection() {
        let mut gate = GateState::new(5).unwrap();
        assert!(feed(&mut gate, &[0.8, 0.9, 0.85, 0.95, 0.1], 4.0).is_none());
        assert!(!gate.is_inert());
    }

    #[test]
    fn ties_pick_earliest() {
        let mut gate = GateState::new(5).unwrap();
        let sel = feed(&mut gate, &[0.9; 5], 4.0).unwrap();
        assert_eq!(sel.frame, FrameIndex(0));
    }

    #[test]
    fn window_slides_fifo() {
        let mut gate = GateState::new(3).unwrap();
        for i in 0..7 {
            gate.observe(report(i, 0.1, 4.0), &cfg()).unwrap();
            assert!(gate.len() <= 3);
        }
        assert_eq!(gate.frames().map(|f| f.0).collect::<Vec<_>>(), vec![4, 5, 6]);
        assert!(gate.retained(FrameIndex(3)).is_none());
        assert!(gate.retained(FrameIndex(5)).is_some());
    }

    #[test]
    fn errors_on_out_of_order_and_inert() {
        let mut gate = GateState::new(1).unwrap();
        gate.observe(report(5, 0.1, 0.0), &cfg()).unwrap();
        assert!(matches!(gate.observe(report(5, 0.1, 0.0), &cfg()), Err(Error::OutOfOrder { .. })));
        assert!(gate.observe(report(6, 0.9, 5.0), &cfg()).unwrap().is_some());
        assert!(matches!(gate.observe(report(7, 0.9, 5.0), &cfg()), Err(Error::GateInert)));
    }

    #[test]
    fn reset_clears_window_and_inert_flag() {
        let mut gate = GateState::new(2).unwrap();
        gate.reset();
        assert!(gate.is_empty());
        feed(&mut gate, &[0.9, 0.9], 4.0).unwrap();
        assert!(gate.is_inert());
        gate.reset();
        assert!(gate.is_empty() && !gate.is_inert());
        // Frame indices may restart after a reset.
        assert!(gate.observe(report(0, 0.9, 4.0), &cfg()).unwrap().is_none());
    }

    #[test]
    fn first_detection_mode_uses_single_frame_window() {
        let c = cfg().with_gate(GateMode::FirstDetection);
        let mut gate = GateState::for_config(&c).unwrap();
        assert_eq!(gate.window_len(), 1);
        assert!(gate.observe(report(0, 0.2, 5.0), &c).unwrap().is_none());
        let sel = gate.observe(report(1, 0.9, 5.0), &c).unwrap().unwrap();
        assert_eq!((sel.frame, sel.decided_at), (FrameIndex(1), FrameIndex(1)));
    }
}
