use std::path::PathBuf;

use crate::stream::StreamId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("invalid feature track: {0}")]
    InvalidTrack(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("duplicate video id {0:?}")]
    DuplicateId(String),

    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid layer spec: {0}")]
    InvalidLayerSpec(String),

    #[error("backward called with a stale or eval-mode cache")]
    StaleCache,

    #[error("dropout requires an rng in train mode")]
    MissingRng,

    #[error("invalid loss spec: {0}")]
    InvalidLoss(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no {role} videos with a {stream} track")]
    MissingRole { role: &'static str, stream: StreamId },

    #[error("video {video:?} has no {stream} track")]
    MissingTrack { video: String, stream: StreamId },

    #[error("training diverged at update {update}: mean loss is not finite")]
    Diverged { update: usize },

    #[error("stream training failed: {}", .0.iter().map(|(s, e)| format!("{s}: {e}")).collect::<Vec<_>>().join("; "))]
    StreamFailures(Vec<(StreamId, Error)>),

    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),

    #[error("invalid clip length {0}")]
    InvalidClipLength(f64),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("nMSD undefined: |V| = {len_v} <= alpha * |G_gt| = {bound}")]
    DegenerateNmsd { len_v: f64, bound: f64 },

    #[error("average precision undefined without positive clips")]
    NoPositives,

    #[error("missing {what} for video {video:?}")]
    MissingInput { what: &'static str, video: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
