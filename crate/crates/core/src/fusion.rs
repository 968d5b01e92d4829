//! Scoring, one-second alignment, normalization and late fusion.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTrack;
use crate::io;
use crate::net::RankingNet;
use crate::stream::StreamId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Temporal,
    Spatial,
    Audio,
    Fused,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Temporal => "temporal",
            Origin::Spatial => "spatial",
            Origin::Audio => "audio",
            Origin::Fused => "fused",
        }
    }
}

impl From<StreamId> for Origin {
    fn from(s: StreamId) -> Self {
        match s {
            StreamId::Temporal => Origin::Temporal,
            StreamId::Spatial => Origin::Spatial,
            StreamId::Audio => Origin::Audio,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fused" => Ok(Origin::Fused),
            other => StreamId::from_str(other).map(Origin::from),
        }
    }
}

/// Per-second scores of one video; entry `k` covers `[k, k + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTimeline {
    pub video_id: String,
    pub origin: Origin,
    pub duration_sec: f64,
    pub scores: Vec<f64>,
}

impl ScoreTimeline {
    pub fn new(video_id: impl Into<String>, origin: Origin, duration_sec: f64, scores: Vec<f64>) -> Result<Self> {
        let t = ScoreTimeline {
            video_id: video_id.into(),
            origin,
            duration_sec,
            scores,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() || self.video_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidTimeline(format!("bad video id {:?}", self.video_id)));
        }
        if !(self.duration_sec.is_finite() && self.duration_sec > 0.0) {
            return Err(Error::InvalidTimeline(format!("duration {} is not positive", self.duration_sec)));
        }
        let seconds = self.duration_sec.ceil() as usize;
        if self.scores.len() != seconds {
            return Err(Error::InvalidTimeline(format!(
                "{} scores for a {} s video",
                self.scores.len(),
                self.duration_sec
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidTimeline("non-finite score".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Text table with a one-line header comment carrying the metadata.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# video_id={} origin={} duration_sec={}\nsecond\tscore\n",
            self.video_id, self.origin, self.duration_sec
        );
        for (k, s) in self.scores.iter().enumerate() {
            let _ = writeln!(out, "{k}\t{s}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidTimeline(m);
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| bad("missing header line".into()))?;
        let (mut id, mut origin, mut duration) = (None, None, None);
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("video_id", v)) => id = Some(v.to_string()),
                Some(("origin", v)) => origin = Some(v.parse::<Origin>().map_err(bad)?),
                Some(("duration_sec", v)) => duration = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(bad(format!("unexpected header field {field:?}"))),
            }
        }
        if lines.next() != Some("second\tscore") {
            return Err(bad("missing column header".into()));
        }
        let mut scores = Vec::new();
        for (k, line) in lines.enumerate() {
            let (idx, score) = line.split_once('\t').ok_or_else(|| bad(format!("malformed row {line:?}")))?;
            if idx.parse::<usize>().ok() != Some(k) {
                return Err(bad(format!("second index {idx:?} out of order")));
            }
            scores.push(score.parse::<f64>().map_err(|e| bad(e.to_string()))?);
        }
        ScoreTimeline::new(
            id.ok_or_else(|| bad("missing video_id".into()))?,
            origin.ok_or_else(|| bad("missing origin".into()))?,
            duration.ok_or_else(|| bad("missing duration_sec".into()))?,
            scores,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&io::read_to_string(path)?).map_err(|e| match e {
            Error::InvalidTimeline(m) => Error::Parse {
                path: path.to_path_buf(),
                message: m,
            },
            other => other,
        })
    }
}

/// Eval-mode score of every unit, in order.
pub fn score_track(net: &RankingNet, track: &FeatureTrack) -> Result<Vec<f64>> {
    if net.spec().input_dim() != track.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.spec().input_dim(),
            actual: track.dim(),
        });
    }
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(track.len());
    let dim = track.dim();
    for start in (0..track.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(track.len());
        let rows = &track.data()[start * dim..end * dim];
        let x = Array2::from_shape_vec((end - start, dim), rows.iter().map(|&v| v as f64).collect())
            .expect("row-major chunk");
        out.extend(net.score_batch(x.view())?);
    }
    Ok(out)
}

/// Averages unit scores onto the one-second grid. Second `s` takes the mean
/// of every unit overlapping `[s, s + 1)`; uncovered seconds copy the nearest
/// covered second, the earlier one on ties.
pub fn align_to_seconds(
    video_id: &str,
    origin: Origin,
    spans: &[(f64, f64)],
    scores: &[f64],
    duration_sec: f64,
) -> Result<ScoreTimeline> {
    if !(duration_sec.is_finite() && duration_sec > 0.0) {
        return Err(Error::InvalidTimeline(format!("duration {duration_sec} is not positive")));
    }
    if spans.len() != scores.len() {
        return Err(Error::InvalidTimeline(format!(
            "{} spans but {} scores",
            spans.len(),
            scores.len()
        )));
    }
    let n = duration_sec.ceil() as usize;
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (&(start, end), &score) in spans.iter().zip(scores) {
        if end <= start {
            continue;
        }
        let first = start.floor().max(0.0) as usize;
        // seconds s with s < end and s + 1 > start
        let last = (end.ceil() as usize).min(n);
        for s in first..last {
            sum[s] += score;
            count[s] += 1;
        }
    }
    let covered: Vec<usize> = (0..n).filter(|&s| count[s] > 0).collect();
    if covered.is_empty() {
        return Err(Error::InvalidTimeline(format!("{video_id}: no unit overlaps the video")));
    }
    let mut out = vec![0.0; n];
    let mut next = 0; // index into `covered` of the first covered second >= s
    for s in 0..n {
        if count[s] > 0 {
            out[s] = sum[s] / count[s] as f64;
            continue;
        }
        while next < covered.len() && covered[next] < s {
            next += 1;
        }
        let before = next.checked_sub(1).map(|i| covered[i]);
        let after = covered.get(next).copied();
        let src = match (before, after) {
            (Some(b), Some(a)) => {
                if s - b <= a - s {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("at least one second is covered"),
        };
        out[s] = sum[src] / count[src] as f64;
    }
    ScoreTimeline::new(video_id, origin, duration_sec, out)
}

/// Scores a track and aligns it to seconds.
pub fn score_timeline(net: &RankingNet, track: &FeatureTrack, video_id: &str, duration_sec: f64) -> Result<ScoreTimeline> {
    let scores = score_track(net, track)?;
    align_to_seconds(video_id, track.stream().into(), track.spans(), &scores, duration_sec)
}

/// Per-video min-max scaling to `[0, 1]`; a constant timeline maps to 0.5.
pub fn normalize(timeline: &ScoreTimeline) -> ScoreTimeline {
    let (lo, hi) = timeline
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = hi - lo;
    let scores = if timeline.scores.is_empty() {
        Vec::new()
    } else if range > 0.0 {
        timeline.scores.iter().map(|&s| ((s - lo) / range).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; timeline.scores.len()]
    };
    ScoreTimeline {
        scores,
        ..timeline.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub temporal: f64,
    pub spatial: f64,
    pub audio: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights {
            temporal: 0.7,
            spatial: 0.15,
            audio: 0.15,
        }
    }
}

impl FusionWeights {
    /// Non-negative weights, rescaled to sum to one.
    pub fn new(temporal: f64, spatial: f64, audio: f64) -> Result<Self> {
        let ws = [temporal, spatial, audio];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(format!("fusion weights {ws:?} must be non-negative")));
        }
        let sum: f64 = ws.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidConfig("fusion weights are all zero".into()));
        }
        Ok(FusionWeights {
            temporal: temporal / sum,
            spatial: spatial / sum,
            audio: audio / sum,
        })
    }

    /// Keeps only the listed streams and renormalizes.
    pub fn restricted_to(&self, streams: &[StreamId]) -> Result<Self> {
        let pick = |s: StreamId, w: f64| if streams.contains(&s) { w } else { 0.0 };
        FusionWeights::new(
            pick(StreamId::Temporal, self.temporal),
            pick(StreamId::Spatial, self.spatial),
            pick(StreamId::Audio, self.audio),
        )
    }

    pub fn get(&self, stream: StreamId) -> f64 {
        match stream {
            StreamId::Temporal => self.temporal,
            StreamId::Spatial => self.spatial,
            StreamId::Audio => self.audio,
        }
    }
}

impl FromStr for FusionWeights {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [t, sp, a] => FusionWeights::new(t, sp, a).map_err(|e| e.to_string()),
            _ => Err(format!("expected three comma-separated weights, got {s:?}")),
        }
    }
}

/// Weighted sum of three normalized timelines of the same video.
pub fn fuse(
    temporal: &ScoreTimeline,
    spatial: &ScoreTimeline,
    audio: &ScoreTimeline,
    weights: &FusionWeights,
) -> Result<ScoreTimeline> {
    for t in [spatial, audio] {
        if t.video_id != temporal.video_id {
            return Err(Error::InvalidTimeline(format!(
                "video id mismatch: {} vs {}",
                temporal.video_id, t.video_id
            )));
        }
        if t.len() != temporal.len() {
            return Err(Error::InvalidTimeline(format!(
                "length mismatch for {}: {} vs {}",
                temporal.video_id,
                temporal.len(),
                t.len()
            )));
        }
    }
    let scores = temporal
        .scores
        .iter()
        .zip(&spatial.scores)
        .zip(&audio.scores)
        .map(|((&t, &s), &a)| weights.temporal * t + weights.spatial * s + weights.audio * a)
        .collect();
    ScoreTimeline::new(temporal.video_id.clone(), Origin::Fused, temporal.duration_sec, scores)
}

/// Normalizes each raw stream timeline, then fuses.
pub fn normalize_and_fuse(
    temporal: &ScoreTimeline,
    spatial: &ScoreTimeline,
    audio: &ScoreTimeline,
    weights: &FusionWeights,
) -> Result<ScoreTimeline> {
    fuse(&normalize(temporal), &normalize(spatial), &normalize(audio), weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;
    use proptest::prelude::*;

    fn tl(scores: Vec<f64>) -> ScoreTimeline {
        let n = scores.len() as f64;
        ScoreTimeline::new("v", Origin::Temporal, n, scores).unwrap()
    }

    #[test]
    fn single_unit() {
        let t = align_to_seconds("v", Origin::Audio, &[(0.0, 1.0)], &[2.0], 1.0).unwrap();
        assert_eq!(t.scores, vec![2.0]);
    }

    #[test]
    fn overlap_mean() {
        let t = align_to_seconds("v", Origin::Audio, &[(0.0, 1.0), (0.5, 1.5)], &[1.0, 3.0], 2.0).unwrap();
        assert_eq!(t.scores, vec![2.0, 3.0]);
    }

    #[test]
    fn gaps_take_nearest_then_earlier() {
        // seconds 0 and 2 covered, 1 is equidistant -> earlier
        let t = align_to_seconds("v", Origin::Audio, &[(0.0, 1.0), (2.0, 3.0)], &[1.0, 5.0], 3.0).unwrap();
        assert_eq!(t.scores, vec![1.0, 1.0, 5.0]);
        // seconds 0 and 3 covered: 1 -> 0, 2 -> 3; trailing 4, 5 -> 3
        let t = align_to_seconds("v", Origin::Audio, &[(0.0, 1.0), (3.0, 4.0)], &[1.0, 5.0], 6.0).unwrap();
        assert_eq!(t.scores, vec![1.0, 1.0, 5.0, 5.0, 5.0, 5.0]);
        // leading gap takes the first covered second
        let t = align_to_seconds("v", Origin::Audio, &[(2.0, 3.0)], &[4.0], 3.0).unwrap();
        assert_eq!(t.scores, vec![4.0, 4.0, 4.0]);
    }

    #[test]
    fn fractional_units_and_duration() {
        let spans: Vec<_> = (0..4).map(|k| (k as f64 * 16.0 / 30.0, (k + 1) as f64 * 16.0 / 30.0)).collect();
        let t = align_to_seconds("v", Origin::Temporal, &spans, &[1.0, 2.0, 3.0, 4.0], 2.1).unwrap();
        assert_eq!(t.len(), 3);
        // second 0: units 0,1; second 1: units 1,2,3; second 2: unit 3 ends at 2.13
        assert_eq!(t.scores[0], 1.5);
        assert_eq!(t.scores[1], 3.0);
        assert_eq!(t.scores[2], 4.0);
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(align_to_seconds("v", Origin::Audio, &[(0.0, 1.0)], &[1.0], 0.0).is_err());
        assert!(align_to_seconds("v", Origin::Audio, &[], &[], 5.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&tl(vec![0.0, 5.0, 10.0])).scores, vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize(&tl(vec![3.0, 3.0, 3.0])).scores, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn fuse_examples() {
        let w = FusionWeights::default();
        let t = tl(vec![1.0, 0.0]);
        let s = ScoreTimeline {
            origin: Origin::Spatial,
            ..tl(vec![0.0, 1.0])
        };
        let f = fuse(&t, &s, &s, &w).unwrap();
        assert!((f.scores[0] - 0.7).abs() < 1e-15);
        assert!((f.scores[1] - 0.3).abs() < 1e-15);
        assert_eq!(f.origin, Origin::Fused);

        let same = tl(vec![0.2, 0.9]);
        let f = fuse(&same, &same, &same, &w).unwrap();
        for (a, b) in f.scores.iter().zip(&same.scores) {
            assert!((a - b).abs() < 1e-15);
        }
        let only_t = FusionWeights::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(fuse(&t, &s, &s, &only_t).unwrap().scores, t.scores);
    }

    #[test]
    fn fuse_mismatches() {
        let w = FusionWeights::default();
        let a = tl(vec![0.0, 1.0]);
        let b = tl(vec![0.0, 1.0, 0.5]);
        assert!(fuse(&a, &b, &a, &w).is_err());
        let c = ScoreTimeline {
            video_id: "other".into(),
            ..a.clone()
        };
        assert!(fuse(&a, &a, &c, &w).is_err());
    }

    #[test]
    fn weights() {
        let w = FusionWeights::new(7.0, 1.5, 1.5).unwrap();
        assert!((w.temporal - 0.7).abs() < 1e-15);
        assert!(FusionWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(FusionWeights::new(-1.0, 1.0, 1.0).is_err());
        let ts = FusionWeights::default()
            .restricted_to(&[StreamId::Temporal, StreamId::Spatial])
            .unwrap();
        assert!((ts.temporal - 0.7 / 0.85).abs() < 1e-15);
        assert_eq!(ts.audio, 0.0);
        let parsed: FusionWeights = "0.7,0.15,0.15".parse().unwrap();
        assert_eq!(parsed, FusionWeights::default());
        assert!("1,2".parse::<FusionWeights>().is_err());
    }

    #[test]
    fn score_track_matches_per_unit_forward() {
        let net = RankingNet::init(LayerSpec::new(vec![3, 5, 1], 0.5).unwrap(), 4);
        let n = 600;
        let spans = (0..n).map(|i| (i as f64, i as f64 + 1.0)).collect();
        let data: Vec<f32> = (0..n * 3).map(|i| ((i * 37 % 101) as f32 - 50.0) / 25.0).collect();
        let track = FeatureTrack::new(StreamId::Audio, 3, spans, data).unwrap();
        let scores = score_track(&net, &track).unwrap();
        assert_eq!(scores.len(), n);
        for (i, s) in scores.iter().enumerate() {
            let x: Vec<f64> = track.vector(i).iter().map(|&v| v as f64).collect();
            let single = net.score(&x).unwrap();
            assert!((s - single).abs() <= 1e-9 * (1.0 + single.abs()));
        }
    }

    #[test]
    fn text_round_trip() {
        assert!(ScoreTimeline::new("clip 7", Origin::Fused, 2.5, vec![0.1, 1.0 / 3.0, 0.0]).is_err());
        let t = ScoreTimeline::new("clip_7", Origin::Fused, 2.5, vec![0.1, 1.0 / 3.0, 0.0]).unwrap();
        assert_eq!(ScoreTimeline::from_text(&t.to_text()).unwrap(), t);
        assert!(ScoreTimeline::from_text("second\tscore\n").is_err());
    }

    proptest! {
        #[test]
        fn normalize_preserves_order(scores in prop::collection::vec(-100.0f64..100.0, 1..50)) {
            let t = tl(scores.clone());
            let n = normalize(&t);
            let constant = scores.iter().all(|&s| s == scores[0]);
            for i in 0..scores.len() {
                prop_assert!((0.0..=1.0).contains(&n.scores[i]));
                for j in 0..scores.len() {
                    prop_assert_eq!(scores[i] <= scores[j], n.scores[i] <= n.scores[j]);
                    if !constant {
                        prop_assert_eq!(scores[i] < scores[j], n.scores[i] < n.scores[j]);
                    }
                }
            }
        }

        #[test]
        fn fused_within_input_range(
            v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..30),
            w in (0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0),
        ) {
            let weights = FusionWeights::new(w.0, w.1, w.2).unwrap();
            let t = tl(v.iter().map(|x| x.0).collect());
            let s = tl(v.iter().map(|x| x.1).collect());
            let a = tl(v.iter().map(|x| x.2).collect());
            let f = fuse(&t, &s, &a, &weights).unwrap();
            for (k, &x) in v.iter().enumerate() {
                let lo = x.0.min(x.1).min(x.2);
                let hi = x.0.max(x.1).max(x.2);
                prop_assert!(f.scores[k] >= lo - 1e-12 && f.scores[k] <= hi + 1e-12);
            }
        }

        #[test]
        fn fuse_is_linear(
            v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 1..20),
            c in -3.0f64..3.0,
        ) {
            let w = FusionWeights::default();
            let t1 = tl(v.iter().map(|x| x.0).collect());
            let t2 = tl(v.iter().map(|x| x.3).collect());
            let combo = tl(v.iter().map(|x| x.0 + c * x.3).collect());
            let s = tl(v.iter().map(|x| x.1).collect());
            let a = tl(v.iter().map(|x| x.2).collect());
            let zero = tl(vec![0.0; v.len()]);
            let lhs = fuse(&combo, &s, &a, &w).unwrap();
            let f1 = fuse(&t1, &s, &a, &w).unwrap();
            let f2 = fuse(&t2, &zero, &zero, &w).unwrap();
            for k in 0..v.len() {
                prop_assert!((lhs.scores[k] - (f1.scores[k] + c * f2.scores[k])).abs() < 1e-12);
            }
        }
    }
}
