//! Synthetic scenes, an oracle backend and region/boundary scoring.

mod compare;
mod metrics;
mod oracle;
mod scene;

pub use compare::{
    compare_policies, run_variant, CompareOptions, ComparisonReport, PairedDelta, RunRow, Stat, Variant, VariantSummary,
    COMPARE_CSV_HEADER,
};
pub use metrics::{
    boundary_adjacency, boundary_pixels, evaluate_f, evaluate_j, f_from_counts, frame_f, frame_j, jf_mean, max_matching,
    DEFAULT_BOUNDARY_RADIUS,
};
pub use oracle::{OracleBackend, OracleOutput};
pub use scene::{
    generate_stream, Detection, Drift, Fidelity, MaskDims, Noise, SceneScript, Shape, SimFrame, SimStream, Trajectory,
    EMBED_DIM,
};
