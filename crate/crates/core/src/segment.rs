//! Clip scoring and highlight segment selection.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotations::{merge_intervals, AnnotationSet};
use crate::error::{Error, Result};
use crate::fusion::ScoreTimeline;
use crate::io;

pub const DEFAULT_CLIP_LEN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub start_sec: f64,
    pub end_sec: f64,
    pub mean_score: f64,
}

impl Clip {
    pub fn len(&self) -> f64 {
        self.end_sec - self.start_sec
    }
}

/// Consecutive clips tiling `[0, duration]`; the last one may be short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScores {
    pub video_id: String,
    pub clip_len_sec: f64,
    pub clips: Vec<Clip>,
}

impl ClipScores {
    pub fn duration(&self) -> f64 {
        self.clips.last().map_or(0.0, |c| c.end_sec)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.mean_score).collect()
    }

    /// Clip indices by descending score, earlier clip first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.scores())
    }
}

/// Indices sorted by descending score; ties keep index order.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Mean score per clip. A clip's members are the seconds overlapping it.
pub fn clip_scores(timeline: &ScoreTimeline, clip_len: f64) -> Result<ClipScores> {
    if !(clip_len.is_finite() && clip_len > 0.0) {
        return Err(Error::InvalidClipLength(clip_len));
    }
    if timeline.is_empty() {
        return Err(Error::InvalidTimeline(format!("{}: empty timeline", timeline.video_id)));
    }
    let duration = timeline.duration_sec;
    let n_clips = (duration / clip_len).ceil().max(1.0) as usize;
    let mut clips = Vec::with_capacity(n_clips);
    for k in 0..n_clips {
        let start = k as f64 * clip_len;
        if start >= duration {
            break;
        }
        let end = ((k + 1) as f64 * clip_len).min(duration);
        let first = start.floor() as usize;
        let last = (end.ceil() as usize).min(timeline.len());
        let members = &timeline.scores[first..last];
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        clips.push(Clip {
            start_sec: start,
            end_sec: end,
            mean_score: mean,
        });
    }
    Ok(ClipScores {
        video_id: timeline.video_id.clone(),
        clip_len_sec: clip_len,
        clips,
    })
}

/// Disjoint, sorted, merged highlight segments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub segments: Vec<(f64, f64)>,
    pub total_len_sec: f64,
}

impl SegmentSet {
    pub fn from_intervals(intervals: Vec<(f64, f64)>) -> Self {
        let segments = merge_intervals(intervals);
        let total_len_sec = segments.iter().map(|&(s, e)| e - s).sum();
        SegmentSet {
            segments,
            total_len_sec,
        }
    }

    pub fn to_text(&self, video_id: &str) -> String {
        let mut out = format!("# video_id={video_id} total_len_sec={}\nstart_sec\tend_sec\n", self.total_len_sec);
        for (s, e) in &self.segments {
            let _ = writeln!(out, "{s}\t{e}");
        }
        out
    }

    pub fn save(&self, video_id: &str, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text(video_id).as_bytes())
    }
}

/// Greedily takes the best clips until the next one would exceed the budget.
pub fn select_top(clips: &ClipScores, budget_sec: f64) -> Result<SegmentSet> {
    if !(budget_sec.is_finite() && budget_sec > 0.0) {
        return Err(Error::InvalidSelection(format!("budget {budget_sec} must be positive")));
    }
    let duration = clips.duration();
    if budget_sec > duration + 1e-9 {
        return Err(Error::InvalidSelection(format!(
            "budget {budget_sec} s exceeds the {duration} s video"
        )));
    }
    let mut used = 0.0;
    let mut chosen = Vec::new();
    for i in clips.ranking() {
        let c = clips.clips[i];
        if used + c.len() > budget_sec + 1e-9 {
            break;
        }
        used += c.len();
        chosen.push((c.start_sec, c.end_sec));
    }
    Ok(SegmentSet::from_intervals(chosen))
}

/// Adds clips in descending score order until they cover at least
/// `alpha * |G_gt|` seconds of ground truth.
pub fn select_at_recall(clips: &ClipScores, annotations: &AnnotationSet, alpha: f64) -> Result<SegmentSet> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidSelection(format!("alpha {alpha} outside (0, 1]")));
    }
    let gt = annotations.total_len();
    if annotations.is_empty() || gt <= 0.0 {
        return Err(Error::InvalidSelection("no ground-truth segments: nMSD is undefined".into()));
    }
    let target = alpha * gt;
    let mut covered = 0.0;
    let mut chosen = Vec::new();
    for i in clips.ranking() {
        if covered >= target - 1e-9 {
            break;
        }
        let c = clips.clips[i];
        covered += annotations.overlap_with(c.start_sec, c.end_sec);
        chosen.push((c.start_sec, c.end_sec));
    }
    if covered < target - 1e-9 {
        return Err(Error::InvalidSelection(format!(
            "clips cover only {covered} of the required {target} s of ground truth"
        )));
    }
    Ok(SegmentSet::from_intervals(chosen))
}
