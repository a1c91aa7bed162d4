//! Streaming engine for long-term referring-object tracking.
//!
//! The crate is organised by stage:
//!
//! * [`gate`] decides when detection output is trustworthy enough to start
//!   tracking, and which frame becomes the permanent reference.
//! * [`memory`] holds the tracking-stage memory bank policies.
//! * [`tracker`] is the two-stage state machine over a pluggable backend.
//! * [`kernels`] is a small from-scratch numeric implementation of the
//!   cross-modal spatial-temporal block used at detection time.
//! * [`sim`] generates synthetic scenes, provides an oracle backend and
//!   scores predictions with region and boundary measures.
//! * [`verify`] bundles the oracle-backed property suites.

pub mod config;
pub mod error;
pub mod gate;
pub mod kernels;
pub mod memory;
pub mod rle;
pub mod sim;
pub mod stream;
pub mod tracker;
pub mod types;
pub mod verify;

pub use config::{GateMode, MemoryPolicy, TrackerConfig};
pub use error::{Error, Result};
pub use gate::{qualifies, GateState, InitialSelection};
pub use memory::{CandidatePool, EntryKind, LongTermBank, MemoryBank, MemoryEntry};
pub use tracker::{SegmentationBackend, StageKind, StepOutput, Tracker};
pub use types::{cosine_similarity, sigmoid, Embedding, FrameIndex, MaskGrid, ScoreReport};

/// Engine version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
