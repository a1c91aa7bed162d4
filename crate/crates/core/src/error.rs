use crate::types::FrameIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm embedding cannot be compared by cosine similarity")]
    ZeroNorm,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("frame {got} is not after previous frame {previous}")]
    OutOfOrder { previous: FrameIndex, got: FrameIndex },

    #[error("gate already selected an initial frame; reset before observing again")]
    GateInert,

    #[error("candidate pool is full ({0} entries); select before offering more")]
    PoolFull(usize),

    #[error("candidate pool holds {len} of {capacity} entries; selection needs a full pool")]
    PoolNotFull { len: usize, capacity: usize },

    #[error("report for frame {0} carries no embedding but the memory policy needs one")]
    MissingEmbedding(FrameIndex),

    #[error("empty memory context in tracking mode")]
    EmptyContext,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("unknown operation `{0}`")]
    UnknownOp(String),

    #[error("stream already ended")]
    StreamEnded,

    #[error("tracker is not configured for {0}")]
    WrongMode(&'static str),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("invalid scene script: {0}")]
    InvalidScript(String),

    #[error("non-finite gradient for parameter element {0}")]
    NonFiniteGradient(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
