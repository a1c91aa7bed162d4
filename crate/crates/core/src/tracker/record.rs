use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{StageKind, StepOutput};
use crate::config::MemoryPolicy;
use crate::error::Result;
use crate::types::FrameIndex;

pub const FRAME_CSV_HEADER: &str = "frame,stage,iou,occ_prob,mem_size,mem_span,policy_time_ns";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: MemoryPolicy,
    pub frames: usize,
    /// False when the gate never fired ("no initial frame").
    pub initial_found: bool,
    pub selected_frame: Option<FrameIndex>,
    pub decided_at: Option<FrameIndex>,
    /// Frames between the selected frame and the decision.
    pub transition_latency: Option<u64>,
    pub tracking_frames: usize,
    pub mean_mem_size: f64,
    pub mean_mem_span: f64,
    pub max_mem_span: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub steps: Vec<StepOutput>,
    pub summary: RunSummary,
}

impl RunRecord {
    pub fn new(steps: Vec<StepOutput>, policy: MemoryPolicy) -> Self {
        let selection = steps.iter().find_map(|s| s.selection.as_ref());
        let tracking: Vec<&StepOutput> = steps.iter().filter(|s| s.stage_after == StageKind::Tracking).collect();
        let mean = |f: &dyn Fn(&StepOutput) -> f64| {
            if tracking.is_empty() {
                0.0
            } else {
                tracking.iter().map(|s| f(s)).sum::<f64>() / tracking.len() as f64
            }
        };
        let summary = RunSummary {
            policy,
            frames: steps.len(),
            initial_found: selection.is_some(),
            selected_frame: selection.map(|s| s.frame),
            decided_at: selection.map(|s| s.decided_at),
            transition_latency: selection.map(|s| s.decided_at.since(s.frame)),
            tracking_frames: tracking.len(),
            mean_mem_size: mean(&|s| s.mem_size as f64),
            mean_mem_span: mean(&|s| s.mem_span as f64),
            max_mem_span: tracking.iter().map(|s| s.mem_span).max().unwrap_or(0),
        };
        RunRecord { steps, summary }
    }

    pub fn mean_policy_time_ns(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.policy_time_ns as f64).sum::<f64>() / self.steps.len() as f64
    }
}

/// One JSON object per step. Timing is zeroed unless `include_timing`, which
/// keeps the file reproducible byte for byte.
pub fn write_records<W: Write>(mut writer: W, steps: &[StepOutput], include_timing: bool) -> Result<()> {
    for step in steps {
        if include_timing {
            serde_json::to_writer(&mut writer, step)?;
        } else {
            let mut s = step.clone();
            s.policy_time_ns = 0;
            serde_json::to_writer(&mut writer, &s)?;
        }
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-frame CSV. When `scores` is given, `j,f,jf` columns are appended.
pub fn write_frame_csv<W: Write>(
    mut writer: W,
    steps: &[StepOutput],
    include_timing: bool,
    scores: Option<&[(f64, f64)]>,
) -> Result<()> {
    write!(writer, "{FRAME_CSV_HEADER}")?;
    if scores.is_some() {
        write!(writer, ",j,f,jf")?;
    }
    writeln!(writer)?;
    for (i, step) in steps.iter().enumerate() {
        write!(
            writer,
            "{},{},{:.6},{:.6},{},{},{}",
            step.frame,
            step.stage_after.name(),
            step.report.iou_score,
            step.report.presence_probability(),
            step.mem_size,
            step.mem_span,
            if include_timing { step.policy_time_ns } else { 0 },
        )?;
        if let Some((j, f)) = scores.and_then(|s| s.get(i)) {
            write!(writer, ",{j:.6},{f:.6},{:.6}", (j + f) / 2.0)?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
