use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the three feature modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamId {
    Temporal,
    Spatial,
    Audio,
}

impl StreamId {
    pub const ALL: [StreamId; 3] = [StreamId::Temporal, StreamId::Spatial, StreamId::Audio];

    /// Input dimension of the stock head for this stream.
    pub fn input_dim(self) -> usize {
        match self {
            StreamId::Temporal => 512,
            StreamId::Spatial => 9216,
            StreamId::Audio => 256,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            StreamId::Temporal => 0,
            StreamId::Spatial => 1,
            StreamId::Audio => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(StreamId::Temporal),
            1 => Some(StreamId::Spatial),
            2 => Some(StreamId::Audio),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamId::Temporal => "temporal",
            StreamId::Spatial => "spatial",
            StreamId::Audio => "audio",
        }
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temporal" => Ok(StreamId::Temporal),
            "spatial" => Ok(StreamId::Spatial),
            "audio" => Ok(StreamId::Audio),
            other => Err(format!("unknown stream {other:?}")),
        }
    }
}

/// A value per stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStream<T> {
    pub temporal: T,
    pub spatial: T,
    pub audio: T,
}

impl<T> PerStream<T> {
    pub fn new(temporal: T, spatial: T, audio: T) -> Self {
        PerStream {
            temporal,
            spatial,
            audio,
        }
    }

    pub fn get(&self, stream: StreamId) -> &T {
        match stream {
            StreamId::Temporal => &self.temporal,
            StreamId::Spatial => &self.spatial,
            StreamId::Audio => &self.audio,
        }
    }

    pub fn get_mut(&mut self, stream: StreamId) -> &mut T {
        match stream {
            StreamId::Temporal => &mut self.temporal,
            StreamId::Spatial => &mut self.spatial,
            StreamId::Audio => &mut self.audio,
        }
    }
}
