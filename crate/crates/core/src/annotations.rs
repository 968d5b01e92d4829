//! Ground-truth highlight intervals.
//!
//! Intervals are half-open `[start, end)` in seconds. Overlapping or touching
//! intervals are merged on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    segments: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationDoc {
    segments: Vec<[f64; 2]>,
}

impl AnnotationSet {
    /// Validates against the video bounds and normalizes.
    pub fn new(segments: Vec<(f64, f64)>, duration_sec: f64) -> Result<Self> {
        for &(start, end) in &segments {
            if !start.is_finite() || !end.is_finite() {
                return Err(Error::InvalidAnnotation(format!("non-finite segment [{start}, {end})")));
            }
            if start >= end {
                return Err(Error::InvalidAnnotation(format!("segment start {start} >= end {end}")));
            }
            if start < 0.0 || end > duration_sec {
                return Err(Error::InvalidAnnotation(format!(
                    "segment [{start}, {end}) outside [0, {duration_sec}]"
                )));
            }
        }
        Ok(AnnotationSet {
            segments: merge_intervals(segments),
        })
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// |G^gt|: total annotated length in seconds.
    pub fn total_len(&self) -> f64 {
        total_len(&self.segments)
    }

    /// Seconds of `[start, end)` covered by the annotation.
    pub fn overlap_with(&self, start: f64, end: f64) -> f64 {
        self.segments
            .iter()
            .map(|&(s, e)| overlap_len((s, e), (start, end)))
            .sum()
    }

    pub fn to_toml(&self) -> String {
        let doc = AnnotationDoc {
            segments: self.segments.iter().map(|&(s, e)| [s, e]).collect(),
        };
        toml::to_string(&doc).expect("annotation document serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_toml().as_bytes())
    }
}

pub fn load_annotations(path: &Path, duration_sec: f64) -> Result<AnnotationSet> {
    let text = io::read_to_string(path)?;
    let doc: AnnotationDoc = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    AnnotationSet::new(doc.segments.into_iter().map(|[s, e]| (s, e)).collect(), duration_sec)
}

/// Sorts and merges overlapping or touching intervals.
pub fn merge_intervals(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (start, end) in intervals {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    merged
}

pub fn overlap_len(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

pub fn total_len(intervals: &[(f64, f64)]) -> f64 {
    intervals.iter().map(|&(s, e)| e - s).sum()
}
