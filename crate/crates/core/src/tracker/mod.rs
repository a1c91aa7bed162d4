//! Two-stage tracker: gated detection, then memory-conditioned tracking,
//! over a pluggable segmentation backend.

mod backends;
mod overhead;
mod record;

pub use backends::{PassthroughBackend, SteadyBackend};
pub use overhead::{profile_overhead, OverheadPoint, OverheadProfile};
pub use record::{write_frame_csv, write_records, RunRecord, RunSummary, FRAME_CSV_HEADER};

use std::borrow::Borrow;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{GateMode, TrackerConfig};
use crate::error::{Error, Result};
use crate::gate::{GateState, InitialSelection};
use crate::kernels::{FeatureGrid, SensoryMemory};
use crate::memory::{MemoryBank, MemoryEntry, MemorySnapshot};
use crate::types::{Embedding, FrameIndex, ScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackendDescriptor {
    pub embedding_dim: usize,
    pub mask_height: usize,
    pub mask_width: usize,
}

/// What the backend conditions on for one prediction.
#[derive(Debug, Clone, Copy)]
pub enum PredictMode<'a> {
    Detection { sensory: &'a SensoryMemory },
    Tracking { context: &'a [&'a MemoryEntry] },
}

#[derive(Debug, Clone, Copy)]
pub struct PredictRequest<'a, F> {
    pub frame: FrameIndex,
    pub payload: &'a F,
    pub text: &'a Embedding,
    pub mode: PredictMode<'a>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub report: ScoreReport,
    /// Encoder features to retain as sensory memory, if the backend has any.
    pub features: Option<FeatureGrid>,
}

impl From<ScoreReport> for Prediction {
    fn from(report: ScoreReport) -> Self {
        Prediction { report, features: None }
    }
}

/// Stand-in for the mask decoder plus memory attention. Implementations must
/// be deterministic in their inputs and usable from several trackers at once.
pub trait SegmentationBackend: Send + Sync {
    type Frame;

    fn descriptor(&self) -> BackendDescriptor;

    fn predict(&self, request: PredictRequest<'_, Self::Frame>) -> Result<Prediction>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Detecting,
    Tracking,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Detecting => "detecting",
            StageKind::Tracking => "tracking",
        }
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Detecting(GateState),
    Tracking(MemoryBank),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub frame: FrameIndex,
    pub stage_after: StageKind,
    pub report: ScoreReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selection: Option<InitialSelection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub memory_snapshot: Option<MemorySnapshot>,
    /// Assembled context length after this step (0 while detecting).
    pub mem_size: usize,
    /// See [`MemoryBank::span`].
    pub mem_span: u64,
    /// Wall time spent in gate and memory bookkeeping, backend excluded.
    pub policy_time_ns: u64,
}

pub struct Tracker<B: SegmentationBackend> {
    config: TrackerConfig,
    backend: Arc<B>,
    text: Embedding,
    sensory: SensoryMemory,
    stage: Stage,
    last_frame: Option<FrameIndex>,
    selection: Option<InitialSelection>,
    ended: bool,
    record_snapshots: bool,
}

impl<B: SegmentationBackend> Tracker<B> {
    pub fn new(config: TrackerConfig, backend: Arc<B>, text: Embedding) -> Result<Self> {
        config.validate()?;
        let gate = GateState::for_config(&config)?;
        Ok(Tracker {
            config,
            backend,
            text,
            sensory: SensoryMemory::new(),
            stage: Stage::Detecting(gate),
            last_frame: None,
            selection: None,
            ended: false,
            record_snapshots: false,
        })
    }

    /// Attach a memory snapshot to every tracking-stage step output.
    pub fn with_snapshots(mut self, on: bool) -> Self {
        self.record_snapshots = on;
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn stage(&self) -> StageKind {
        match self.stage {
            Stage::Detecting(_) => StageKind::Detecting,
            Stage::Tracking(_) => StageKind::Tracking,
        }
    }

    pub fn selection(&self) -> Option<&InitialSelection> {
        self.selection.as_ref()
    }

    pub fn memory(&self) -> Option<&MemoryBank> {
        match &self.stage {
            Stage::Tracking(bank) => Some(bank),
            Stage::Detecting(_) => None,
        }
    }

    pub fn gate(&self) -> Option<&GateState> {
        match &self.stage {
            Stage::Detecting(gate) => Some(gate),
            Stage::Tracking(_) => None,
        }
    }

    /// Marks the end of the stream; later steps fail.
    pub fn finish(&mut self) {
        self.ended = true;
    }

    pub fn step(&mut self, frame: FrameIndex, payload: &B::Frame) -> Result<StepOutput> {
        if self.ended {
            return Err(Error::StreamEnded);
        }
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(Error::OutOfOrder { previous, got: frame });
            }
        }

        let mut selection = None;
        let (report, features, policy_time_ns) = match &mut self.stage {
            Stage::Detecting(gate) => {
                let request =
                    PredictRequest { frame, payload, text: &self.text, mode: PredictMode::Detection { sensory: &self.sensory } };
                let Prediction { report, features } = self.backend.predict(request)?;
                check_frame(&report, frame)?;

                let started = Instant::now();
                if let Some(sel) = gate.observe(report.clone(), &self.config)? {
                    let bank = MemoryBank::new(&sel.report, &self.config)?;
                    self.stage = Stage::Tracking(bank);
                    selection = Some(sel);
                }
                (report, features, elapsed_ns(started))
            }
            Stage::Tracking(bank) => {
                let started = Instant::now();
                let context = bank.assemble_context();
                let mut spent = elapsed_ns(started);
                if context.is_empty() {
                    return Err(Error::EmptyContext);
                }
                let request =
                    PredictRequest { frame, payload, text: &self.text, mode: PredictMode::Tracking { context: &context } };
                let Prediction { report, features } = self.backend.predict(request)?;
                check_frame(&report, frame)?;
                drop(context);

                let started = Instant::now();
                bank.update(&report)?;
                spent += elapsed_ns(started);
                (report, features, spent)
            }
        };
        self.last_frame = Some(frame);
        if let Some(grid) = features {
            self.sensory.update(frame, grid)?;
        }
        if let Some(sel) = &selection {
            self.selection = Some(sel.clone());
        }

        let (mem_size, mem_span, memory_snapshot) = match &self.stage {
            Stage::Tracking(bank) => (
                bank.assemble_context().len(),
                bank.span(),
                self.record_snapshots.then(|| bank.snapshot()),
            ),
            Stage::Detecting(_) => (0, 0, None),
        };
        Ok(StepOutput {
            frame,
            stage_after: self.stage(),
            report,
            selection,
            memory_snapshot,
            mem_size,
            mem_span,
            policy_time_ns,
        })
    }

    /// [`Tracker::step`] for a tracker built with the first-detection gate.
    pub fn ablation_gate_step(&mut self, frame: FrameIndex, payload: &B::Frame) -> Result<StepOutput> {
        if self.config.gate != GateMode::FirstDetection {
            return Err(Error::WrongMode("first-detection gating"));
        }
        self.step(frame, payload)
    }

    /// Steps through a whole stream and ends it.
    pub fn run_stream<I, P>(&mut self, stream: I) -> Result<RunRecord>
    where
        I: IntoIterator<Item = (FrameIndex, P)>,
        P: Borrow<B::Frame>,
    {
        let mut steps = Vec::new();
        for (frame, payload) in stream {
            steps.push(self.step(frame, payload.borrow())?);
        }
        self.finish();
        Ok(RunRecord::new(steps, self.config.policy))
    }
}

fn check_frame(report: &ScoreReport, frame: FrameIndex) -> Result<()> {
    if report.frame != frame {
        return Err(Error::Backend(format!("report for frame {} returned for frame {frame}", report.frame)));
    }
    Ok(())
}

fn elapsed_ns(started: Instant) -> u64 {
    u64::try_from(started.elapsed().as_nanos()).unwrap_or(u64::MAX)
}
