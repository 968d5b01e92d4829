//! Feature tracks and their binary file format.
//!
//! Layout (little-endian):
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"HLFT"`       |
//! | version      | `u16` (= 1)     |
//! | stream id    | `u8`            |
//! | dim          | `u32`           |
//! | unit count   | `u64`           |
//! | units        | `{start f64, end f64, dim x f32}` |

use std::path::Path;

use crate::error::{Error, Result};
use crate::io;
use crate::stream::StreamId;

pub const FEATURE_MAGIC: [u8; 4] = *b"HLFT";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 8;

/// A timestamped sequence of fixed-dimension feature vectors for one stream
/// of one video. Vectors are stored contiguously, row `i` being unit `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    stream: StreamId,
    dim: usize,
    spans: Vec<(f64, f64)>,
    data: Vec<f32>,
}

impl FeatureTrack {
    pub fn empty(stream: StreamId, dim: usize) -> Result<Self> {
        Self::new(stream, dim, Vec::new(), Vec::new())
    }

    /// Builds a track and checks every invariant.
    pub fn new(stream: StreamId, dim: usize, spans: Vec<(f64, f64)>, data: Vec<f32>) -> Result<Self> {
        let track = FeatureTrack {
            stream,
            dim,
            spans,
            data,
        };
        track.validate()?;
        Ok(track)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidTrack("dim must be positive".into()));
        }
        if self.data.len() != self.spans.len() * self.dim {
            return Err(Error::InvalidTrack(format!(
                "{} values for {} units of dim {}",
                self.data.len(),
                self.spans.len(),
                self.dim
            )));
        }
        let mut prev_start = f64::NEG_INFINITY;
        for (i, &(start, end)) in self.spans.iter().enumerate() {
            if !start.is_finite() || !end.is_finite() || start < 0.0 {
                return Err(Error::InvalidTrack(format!("unit {i}: bad timestamps [{start}, {end})")));
            }
            if end <= start {
                return Err(Error::InvalidTrack(format!("unit {i}: end {end} <= start {start}")));
            }
            if start < prev_start {
                return Err(Error::InvalidTrack(format!("unit {i}: timestamps not sorted")));
            }
            prev_start = start;
        }
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrack(format!(
                "unit {}: non-finite component",
                pos / self.dim
            )));
        }
        Ok(())
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn spans(&self) -> &[(f64, f64)] {
        &self.spans
    }

    pub fn vector(&self, unit: usize) -> &[f32] {
        &self.data[unit * self.dim..(unit + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Checks that the track fits the stock head of its stream.
    pub fn check_stock_dim(&self) -> Result<()> {
        let expected = self.stream.input_dim();
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dim,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let record = 16 + 4 * self.dim;
        let mut out = Vec::with_capacity(HEADER_LEN + record * self.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.push(self.stream.code());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (i, &(start, end)) in self.spans.iter().enumerate() {
            out.extend_from_slice(&start.to_le_bytes());
            out.extend_from_slice(&end.to_le_bytes());
            for v in self.vector(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != FEATURE_MAGIC {
                return Err(bad_magic(bytes));
            }
            return Err(Error::CorruptPayload(format!(
                "header truncated at {} bytes",
                bytes.len()
            )));
        }
        if bytes[..4] != FEATURE_MAGIC {
            return Err(bad_magic(bytes));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FEATURE_VERSION {
            return Err(Error::Version {
                expected: FEATURE_VERSION,
                found: version,
            });
        }
        let stream = StreamId::from_code(bytes[6])
            .ok_or_else(|| Error::CorruptPayload(format!("unknown stream id {}", bytes[6])))?;
        let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[11..19].try_into().unwrap());
        if dim == 0 {
            return Err(Error::InvalidTrack("dim must be positive".into()));
        }
        let payload = &bytes[HEADER_LEN..];
        let record = 16 + 4 * dim;
        let expected = (count as u128) * (record as u128);
        if (payload.len() as u128) < expected {
            return Err(Error::CorruptPayload(format!(
                "payload holds {} bytes, header promises {count} units of dim {dim} ({expected} bytes)",
                payload.len()
            )));
        }
        if (payload.len() as u128) > expected {
            return Err(Error::CorruptPayload(format!(
                "{} trailing bytes: header dim {dim} disagrees with payload",
                payload.len() as u128 - expected
            )));
        }
        let count = count as usize;
        let mut spans = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for rec in payload.chunks_exact(record) {
            let start = f64::from_le_bytes(rec[0..8].try_into().unwrap());
            let end = f64::from_le_bytes(rec[8..16].try_into().unwrap());
            spans.push((start, end));
            data.extend(
                rec[16..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
            );
        }
        FeatureTrack::new(stream, dim, spans, data)
    }
}

fn bad_magic(bytes: &[u8]) -> Error {
    let mut found = [0u8; 4];
    found.copy_from_slice(&bytes[..4]);
    Error::BadMagic {
        expected: FEATURE_MAGIC,
        found,
    }
}

pub fn read_feature_file(path: &Path) -> Result<FeatureTrack> {
    let bytes = io::read(path)?;
    FeatureTrack::from_bytes(&bytes)
}

pub fn write_feature_file(track: &FeatureTrack, path: &Path) -> Result<()> {
    io::write_atomic(path, &track.to_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureTrack {
        FeatureTrack::new(
            StreamId::Audio,
            3,
            vec![(0.0, 1.0), (1.0, 2.0)],
            vec![0.5, -1.0, 2.0, 3.5, 0.0, -0.25],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_in_memory() {
        let t = sample();
        assert_eq!(FeatureTrack::from_bytes(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn round_trip_on_disk_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.hlft"), dir.path().join("b.hlft"));
        let t = sample();
        write_feature_file(&t, &a).unwrap();
        write_feature_file(&t, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(read_feature_file(&a).unwrap(), t);
    }

    #[test]
    fn empty_track_round_trips() {
        let t = FeatureTrack::empty(StreamId::Temporal, 512).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = FeatureTrack::from_bytes(&bytes).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 512);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"HLFT");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 2);
        assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[11..19].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), HEADER_LEN + 2 * (16 + 12));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(FeatureTrack::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn rejects_truncated_payload() {
        let bytes = sample().to_bytes();
        let err = FeatureTrack::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::CorruptPayload(_)), "{err}");
    }

    #[test]
    fn rejects_dim_mismatch() {
        let mut bytes = sample().to_bytes();
        // claim dim 2: payload is now too long for the header
        bytes[7..11].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(FeatureTrack::from_bytes(&bytes), Err(Error::CorruptPayload(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let mut bytes = sample().to_bytes();
        let off = HEADER_LEN + 16;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(FeatureTrack::from_bytes(&bytes), Err(Error::InvalidTrack(_))));
    }

    #[test]
    fn rejects_unsorted_and_empty_spans() {
        let unsorted = FeatureTrack::new(StreamId::Audio, 1, vec![(1.0, 2.0), (0.0, 1.0)], vec![0.0, 0.0]);
        assert!(unsorted.is_err());
        let inverted = FeatureTrack::new(StreamId::Audio, 1, vec![(1.0, 1.0)], vec![0.0]);
        assert!(inverted.is_err());
    }

    #[test]
    fn unsorted_file_is_rejected() {
        let t = sample();
        let mut bytes = t.to_bytes();
        let rec = 16 + 12;
        // swap start times of the two units
        let a = HEADER_LEN;
        let b = HEADER_LEN + rec;
        bytes[a..a + 8].copy_from_slice(&1.5f64.to_le_bytes());
        bytes[b..b + 8].copy_from_slice(&0.5f64.to_le_bytes());
        assert!(matches!(FeatureTrack::from_bytes(&bytes), Err(Error::InvalidTrack(_))));
    }

    #[test]
    fn stock_dim_check() {
        assert!(sample().check_stock_dim().is_err());
        FeatureTrack::empty(StreamId::Audio, 256)
            .unwrap()
            .check_stock_dim()
            .unwrap();
    }
}
