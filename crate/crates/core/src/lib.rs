//! Weakly supervised highlight detection for long game videos.
//!
//! Per-stream ranking heads are trained so that units sampled from short
//! edited highlight videos outscore units sampled from long raw videos. At
//! inference the temporal, spatial and audio heads score a video, their
//! timelines are aligned to a one-second grid, min-max normalized and fused
//! with fixed weights. Fused timelines are cut into clips, from which
//! highlight segments are selected and evaluated with nMSD and mAP.
//!
//! The crate also ships a synthetic dataset generator with planted highlight
//! intervals, so every stage can be checked without real footage.

pub mod annotations;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod features;
pub mod fusion;
pub mod io;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod segment;
pub mod stream;
pub mod synth;
pub mod trainer;

pub use annotations::AnnotationSet;
pub use error::{Error, Result};
pub use features::FeatureTrack;
pub use fusion::{FusionWeights, Origin, ScoreTimeline};
pub use loss::{LossSpec, LossValue};
pub use manifest::{DatasetManifest, Role, VideoEntry};
pub use metrics::EvaluationReport;
pub use net::{LayerSpec, Mode, OptimizerState, RankingNet};
pub use segment::{ClipScores, SegmentSet};
pub use stream::StreamId;
pub use synth::SynthSpec;
pub use trainer::{TrainConfig, TrainLog};
