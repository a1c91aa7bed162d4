use std::collections::VecDeque;

use super::tensor::FeatureGrid;
use crate::error::{Error, Result};
use crate::types::FrameIndex;

pub const SENSORY_SLOTS: usize = 2;

/// The two most recent encoder feature grids, oldest first.
#[derive(Debug, Clone, Default)]
pub struct SensoryMemory {
    slots: VecDeque<(FrameIndex, FeatureGrid)>,
}

impl SensoryMemory {
    pub fn new() -> Self {
        SensoryMemory::default()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn update(&mut self, frame: FrameIndex, grid: FeatureGrid) -> Result<()> {
        if let Some((last, _)) = self.slots.back() {
            if frame <= *last {
                return Err(Error::OutOfOrder { previous: *last, got: frame });
            }
        }
        self.slots.push_back((frame, grid));
        while self.slots.len() > SENSORY_SLOTS {
            self.slots.pop_front();
        }
        Ok(())
    }

    pub fn frames(&self) -> impl Iterator<Item = FrameIndex> + '_ {
        self.slots.iter().map(|(f, _)| *f)
    }

    /// Frame `t-1` (`lag = 1`) or `t-2` (`lag = 2`) relative to the next frame.
    pub fn lagged(&self, lag: usize) -> Option<&FeatureGrid> {
        if lag == 0 || lag > self.slots.len() {
            return None;
        }
        self.slots.get(self.slots.len() - lag).map(|(_, g)| g)
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: f64) -> FeatureGrid {
        FeatureGrid::from_vec(1, 1, 1, vec![v]).unwrap()
    }

    #[test]
    fn keeps_two_newest() {
        let mut s = SensoryMemory::new();
        s.update(FrameIndex(0), grid(0.0)).unwrap();
        assert_eq!(s.len(), 1);
        s.update(FrameIndex(1), grid(1.0)).unwrap();
        s.update(FrameIndex(2), grid(2.0)).unwrap();
        assert_eq!(s.frames().map(|f| f.0).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(s.lagged(1).unwrap().data(), &[2.0]);
        assert_eq!(s.lagged(2).unwrap().data(), &[1.0]);
        assert!(s.lagged(3).is_none());
    }

    #[test]
    fn rejects_non_monotone() {
        let mut s = SensoryMemory::new();
        s.update(FrameIndex(3), grid(0.0)).unwrap();
        assert!(s.update(FrameIndex(3), grid(0.0)).is_err());
        assert!(s.update(FrameIndex(1), grid(0.0)).is_err());
    }
}
