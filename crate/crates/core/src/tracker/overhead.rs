use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{SteadyBackend, Tracker};
use crate::config::{MemoryPolicy, TrackerConfig};
use crate::error::{Error, Result};
use crate::types::{Embedding, FrameIndex};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverheadPoint {
    pub position: u64,
    /// Median over every sample in the window, across repeats.
    pub median_ns: f64,
    pub mean_ns: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverheadProfile {
    pub policy: MemoryPolicy,
    pub frames: usize,
    pub repeats: usize,
    pub points: Vec<OverheadPoint>,
}

impl OverheadProfile {
    pub fn at(&self, position: u64) -> Option<&OverheadPoint> {
        self.points.iter().find(|p| p.position == position)
    }

    /// Median cost at `late` divided by median cost at `early`.
    pub fn ratio(&self, late: u64, early: u64) -> Option<f64> {
        let (l, e) = (self.at(late)?, self.at(early)?);
        Some(l.median_ns / e.median_ns.max(1.0))
    }
}

/// Measures per-frame policy bookkeeping time (gate plus memory, backend
/// excluded) along a long confident stream, sampled in windows of
/// `2 * half_window` frames centred on each position.
pub fn profile_overhead(
    config: &TrackerConfig,
    frames: usize,
    repeats: usize,
    positions: &[u64],
    half_window: u64,
) -> Result<OverheadProfile> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("at least one repeat is needed".into()));
    }
    if let Some(&p) = positions.iter().find(|&&p| p as usize > frames) {
        return Err(Error::InvalidConfig(format!("position {p} beyond stream of {frames} frames")));
    }
    let backend = Arc::new(SteadyBackend::default());
    let text = Embedding::new(vec![1.0])?;
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut tracker = Tracker::new(config.clone(), backend.clone(), text.clone())?;
        let mut times = Vec::with_capacity(frames);
        for f in 0..frames as u64 {
            times.push(tracker.step(FrameIndex(f), &())?.policy_time_ns);
        }
        runs.push(times);
    }

    let points = positions
        .iter()
        .map(|&position| {
            // positions are 1-based stream positions
            let centre = position.saturating_sub(1);
            let lo = centre.saturating_sub(half_window) as usize;
            let hi = ((centre + half_window) as usize).min(frames).max(lo + 1);
            let mut samples: Vec<f64> =
                runs.iter().flat_map(|r| r[lo..hi.min(r.len())].iter().map(|&t| t as f64)).collect();
            samples.sort_by(f64::total_cmp);
            let mean_ns = samples.iter().sum::<f64>() / samples.len() as f64;
            OverheadPoint { position, median_ns: samples[samples.len() / 2], mean_ns }
        })
        .collect();
    Ok(OverheadProfile { policy: config.policy, frames, repeats, points })
}
