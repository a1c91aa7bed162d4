use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Memory-bank variant used during tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryPolicy {
    /// Nearest-frame short-term queue only.
    Vanilla,
    /// Short-term queue enlarged by `n_l` slots.
    Extended,
    /// Fixed-stride long-term sampling.
    Interval,
    /// High-IoU candidate pool plus diversity selection into a long-term queue.
    Dlm,
}

impl MemoryPolicy {
    pub const ALL: [MemoryPolicy; 4] =
        [MemoryPolicy::Vanilla, MemoryPolicy::Extended, MemoryPolicy::Interval, MemoryPolicy::Dlm];

    pub fn name(self) -> &'static str {
        match self {
            MemoryPolicy::Vanilla => "vanilla",
            MemoryPolicy::Extended => "extended",
            MemoryPolicy::Interval => "interval",
            MemoryPolicy::Dlm => "dlm",
        }
    }
}

impl fmt::Display for MemoryPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(MemoryPolicy::Vanilla),
            "extended" => Ok(MemoryPolicy::Extended),
            "interval" => Ok(MemoryPolicy::Interval),
            "dlm" => Ok(MemoryPolicy::Dlm),
            other => Err(Error::InvalidConfig(format!("unknown memory policy `{other}`"))),
        }
    }
}

/// How the detection stage hands over to tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// Sliding-window qualification, best-of-window selection.
    #[default]
    Windowed,
    /// Ablation: the first single qualifying frame starts tracking.
    FirstDetection,
}

impl FromStr for GateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "windowed" => Ok(GateMode::Windowed),
            "first-detection" | "first" => Ok(GateMode::FirstDetection),
            other => Err(Error::InvalidConfig(format!("unknown gate mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// IoU-score threshold of the initial-frame gate.
    pub delta_iou: f64,
    /// Presence-probability threshold of the initial-frame gate.
    pub delta_o: f64,
    /// IoU-score threshold for candidate-pool admission.
    pub gamma_iou: f64,
    /// Gate window length.
    pub n_w: usize,
    /// Candidate pool capacity.
    pub n_p: usize,
    /// Long-term capacity, permanent initial entry included.
    pub n_l: usize,
    pub short_term_capacity: usize,
    pub policy: MemoryPolicy,
    pub gate: GateMode,
    pub interval_every: u64,
    pub interval_keep: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            delta_iou: 0.7,
            delta_o: 0.9,
            gamma_iou: 0.95,
            n_w: 5,
            n_p: 5,
            n_l: 4,
            short_term_capacity: 6,
            policy: MemoryPolicy::Dlm,
            gate: GateMode::Windowed,
            interval_every: 5,
            interval_keep: 3,
        }
    }
}

impl TrackerConfig {
    pub fn with_policy(mut self, policy: MemoryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_gate(mut self, gate: GateMode) -> Self {
        self.gate = gate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v.is_finite() && (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name}={v} outside [0, 1]")))
            }
        };
        unit("delta_iou", self.delta_iou)?;
        unit("gamma_iou", self.gamma_iou)?;
        if !(self.delta_o > 0.0 && self.delta_o < 1.0) {
            return Err(Error::InvalidConfig(format!("delta_o={} outside (0, 1)", self.delta_o)));
        }
        for (name, v) in [
            ("n_w", self.n_w),
            ("n_p", self.n_p),
            ("n_l", self.n_l),
            ("short_term_capacity", self.short_term_capacity),
            ("interval_keep", self.interval_keep),
        ] {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.interval_every < 1 {
            return Err(Error::InvalidConfig("interval_every must be at least 1".into()));
        }
        if self.interval_keep + 1 > self.n_l {
            return Err(Error::InvalidConfig(format!(
                "interval_keep={} plus the initial entry exceeds n_l={}",
                self.interval_keep, self.n_l
            )));
        }
        Ok(())
    }

    /// Short-term queue length actually used by the configured policy.
    pub fn effective_short_capacity(&self) -> usize {
        match self.policy {
            MemoryPolicy::Extended => self.short_term_capacity + self.n_l,
            _ => self.short_term_capacity,
        }
    }

    /// FIFO portion of the long-term bank (the initial entry is extra).
    pub fn long_queue_capacity(&self) -> usize {
        match self.policy {
            MemoryPolicy::Dlm => self.n_l - 1,
            MemoryPolicy::Interval => self.interval_keep,
            MemoryPolicy::Vanilla | MemoryPolicy::Extended => 0,
        }
    }

    /// Upper bound on an assembled context.
    pub fn max_context_len(&self) -> usize {
        self.effective_short_capacity() + 1 + self.long_queue_capacity()
    }
}
